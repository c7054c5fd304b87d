#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sta/tensor.hpp"

namespace sta {

// Masks are stored as one 64-bit word per block.
inline constexpr std::uint32_t kMaskBits = 64;

struct BlockShape {
  std::uint32_t rows = 1;
  std::uint32_t cols = 1;

  std::uint32_t area() const { return rows * cols; }
  bool operator==(const BlockShape&) const = default;
};

enum class BlockTransform { Identity, Rotate180, Transpose };

// Traversal order over the (K, C) block grid of a weight tensor.
enum class BlockOrder { CMajor, KMajor };

// Compressed sparse block tensor.
//
// The last two dense dimensions are cut into rows x cols blocks; every
// leading dimension indexes blocks directly. A conv weight [K][C][R][S]
// encoded with an R x S block therefore has one block per kernel, and an
// activation tensor [N][C][H][W] has one or more tiles per channel plane.
//
// Blocks are numbered row-major over the block grid. For block b,
//   masks[b]                    bit i*cols + j set <=> element (i, j) non-zero
//   pointers[b]..pointers[b+1]  its packed values, row-major by position
// and pointers has a trailing sentinel equal to values.size().
class CsbTensor {
 public:
  CsbTensor() = default;

  static CsbTensor encode(const Tensor& dense, BlockShape block);

  // Assembles a tensor from raw arrays. Throws FormatError on any
  // pointer/mask/value inconsistency.
  static CsbTensor from_parts(Shape dense_shape, BlockShape block, std::vector<std::uint32_t> pointers,
                              std::vector<std::uint64_t> masks, std::vector<float> values);

  Tensor decode() const;

  // Re-checks every structural invariant; throws FormatError.
  void validate() const;

  const Shape& dense_shape() const { return dense_shape_; }
  BlockShape block_shape() const { return block_; }
  const Shape& grid_shape() const { return grid_; }
  std::span<const std::uint32_t> pointers() const { return pointers_; }
  std::span<const std::uint64_t> masks() const { return masks_; }
  std::span<const float> values() const { return values_; }

  std::size_t block_count() const { return masks_.size(); }
  std::size_t nnz() const { return values_.size(); }
  std::int64_t dense_size() const { return shape_volume(dense_shape_); }
  double density() const;

  // Row-major flat block index of a block-grid coordinate; throws
  // ShapeError when out of range.
  std::size_t block_index(std::span<const std::int64_t> coord) const;
  std::vector<std::int64_t> block_coord(std::size_t index) const;

  // Non-zeros in one block, by pointer subtraction.
  std::uint32_t block_nnz(std::size_t index) const;
  std::uint32_t block_nnz(std::span<const std::int64_t> coord) const { return block_nnz(block_index(coord)); }

  // Unpacks one block and applies `transform` to positions. Identity and
  // Rotate180 return rows x cols, Transpose returns cols x rows.
  Tensor fetch_block(std::span<const std::int64_t> coord, BlockTransform transform = BlockTransform::Identity) const;

  // Block indices of a weight tensor in the requested order. Requires a
  // [K][C] block grid: an fc matrix, or a [K][C][R][S] tensor blocked by
  // whole kernels. Throws ShapeError otherwise.
  std::vector<std::size_t> block_order(BlockOrder order) const;

  template <class Visitor>
  void for_each_block(BlockOrder order, Visitor&& visit) const {
    for (std::size_t b : block_order(order)) {
      const auto coord = block_coord(b);
      visit(std::span<const std::int64_t>(coord), fetch_block(coord));
    }
  }

  // Bytes of the compressed representation: values, 32-bit pointers and
  // masks sized to the block area.
  std::size_t storage_bytes() const;
  std::size_t dense_bytes() const { return static_cast<std::size_t>(dense_size()) * sizeof(float); }
  std::size_t metadata_bytes() const;

  void write(std::ostream& out) const;
  static CsbTensor read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static CsbTensor load(const std::filesystem::path& path);

  bool operator==(const CsbTensor&) const = default;

 private:
  Shape dense_shape_;
  BlockShape block_;
  Shape grid_;
  std::vector<std::uint32_t> pointers_;
  std::vector<std::uint64_t> masks_;
  std::vector<float> values_;

  // Mask of positions inside the dense bounds for block `index`.
  std::uint64_t valid_mask(std::size_t index) const;
  static Shape make_grid(const Shape& dense, BlockShape block);
};

}  // namespace sta
