#include "sta/csb.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "sta/error.hpp"

namespace sta {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'S', 'B'};
constexpr std::uint32_t kVersion = 1;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw FormatError("truncated CSB stream");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace

Shape CsbTensor::make_grid(const Shape& dense, BlockShape block) {
  if (dense.size() < 2) throw ShapeError("CSB tensors need rank >= 2");
  for (auto d : dense)
    if (d < 1) throw ShapeError("CSB dense dimensions must be >= 1");
  if (block.rows == 0 || block.cols == 0) throw ShapeError("block extents must be positive");
  if (block.area() > kMaskBits)
    throw ShapeError("block " + std::to_string(block.rows) + "x" + std::to_string(block.cols) +
                     " exceeds the 64-bit mask width");
  Shape grid(dense.begin(), dense.end() - 2);
  grid.push_back(ceil_div(dense[dense.size() - 2], block.rows));
  grid.push_back(ceil_div(dense.back(), block.cols));
  return grid;
}

std::uint64_t CsbTensor::valid_mask(std::size_t index) const {
  const auto gw = grid_.back();
  const auto gh = grid_[grid_.size() - 2];
  const auto bw = static_cast<std::int64_t>(index) % gw;
  const auto bh = (static_cast<std::int64_t>(index) / gw) % gh;
  const auto H = dense_shape_[dense_shape_.size() - 2];
  const auto W = dense_shape_.back();
  std::uint64_t m = 0;
  for (std::uint32_t i = 0; i < block_.rows; ++i) {
    if (bh * block_.rows + i >= H) break;
    for (std::uint32_t j = 0; j < block_.cols; ++j) {
      if (bw * block_.cols + j >= W) break;
      m |= std::uint64_t{1} << (i * block_.cols + j);
    }
  }
  return m;
}

CsbTensor CsbTensor::encode(const Tensor& dense, BlockShape block) {
  CsbTensor t;
  t.dense_shape_ = dense.shape();
  t.block_ = block;
  t.grid_ = make_grid(t.dense_shape_, block);

  const auto H = t.dense_shape_[t.dense_shape_.size() - 2];
  const auto W = t.dense_shape_.back();
  const auto gh = t.grid_[t.grid_.size() - 2];
  const auto gw = t.grid_.back();
  const auto planes = shape_volume(t.dense_shape_) / (H * W);
  const auto blocks = static_cast<std::size_t>(planes * gh * gw);

  t.pointers_.reserve(blocks + 1);
  t.masks_.reserve(blocks);
  t.values_.reserve(dense.count_nonzero());
  const auto data = dense.data();
  for (std::int64_t plane = 0; plane < planes; ++plane) {
    const float* base = data.data() + plane * H * W;
    for (std::int64_t bh = 0; bh < gh; ++bh) {
      for (std::int64_t bw = 0; bw < gw; ++bw) {
        t.pointers_.push_back(static_cast<std::uint32_t>(t.values_.size()));
        std::uint64_t mask = 0;
        for (std::uint32_t i = 0; i < block.rows; ++i) {
          const auto h = bh * block.rows + i;
          if (h >= H) break;
          for (std::uint32_t j = 0; j < block.cols; ++j) {
            const auto w = bw * block.cols + j;
            if (w >= W) break;
            const float v = base[h * W + w];
            if (v != 0.0f) {
              mask |= std::uint64_t{1} << (i * block.cols + j);
              t.values_.push_back(v);
            }
          }
        }
        t.masks_.push_back(mask);
      }
    }
  }
  t.pointers_.push_back(static_cast<std::uint32_t>(t.values_.size()));
  return t;
}

CsbTensor CsbTensor::from_parts(Shape dense_shape, BlockShape block, std::vector<std::uint32_t> pointers,
                                std::vector<std::uint64_t> masks, std::vector<float> values) {
  CsbTensor t;
  t.dense_shape_ = std::move(dense_shape);
  t.block_ = block;
  try {
    t.grid_ = make_grid(t.dense_shape_, block);
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
  t.pointers_ = std::move(pointers);
  t.masks_ = std::move(masks);
  t.values_ = std::move(values);
  t.validate();
  return t;
}

void CsbTensor::validate() const {
  const auto blocks = static_cast<std::size_t>(shape_volume(grid_));
  if (masks_.size() != blocks)
    throw FormatError("mask array holds " + std::to_string(masks_.size()) + " entries, block grid needs " +
                      std::to_string(blocks));
  if (pointers_.size() != blocks + 1) throw FormatError("pointer array must hold one entry per block plus a sentinel");
  if (pointers_.front() != 0) throw FormatError("first pointer must be 0");
  if (pointers_.back() != values_.size()) throw FormatError("sentinel pointer does not equal the value count");
  for (std::size_t b = 0; b < blocks; ++b) {
    if (pointers_[b + 1] < pointers_[b]) throw FormatError("pointer array decreases at block " + std::to_string(b));
    if ((masks_[b] & ~valid_mask(b)) != 0)
      throw FormatError("mask of block " + std::to_string(b) + " marks positions outside the block");
    if (pointers_[b + 1] - pointers_[b] != static_cast<std::uint32_t>(std::popcount(masks_[b])))
      throw FormatError("pointer delta of block " + std::to_string(b) + " disagrees with its mask popcount");
  }
  for (float v : values_)
    if (v == 0.0f) throw FormatError("explicit zero stored in the value array");
}

Tensor CsbTensor::decode() const {
  validate();
  Tensor out(dense_shape_);
  const auto H = dense_shape_[dense_shape_.size() - 2];
  const auto W = dense_shape_.back();
  const auto gh = grid_[grid_.size() - 2];
  const auto gw = grid_.back();
  auto data = out.data();
  for (std::size_t b = 0; b < masks_.size(); ++b) {
    const auto bi = static_cast<std::int64_t>(b);
    const auto plane = bi / (gh * gw);
    const auto bh = (bi / gw) % gh;
    const auto bw = bi % gw;
    std::uint64_t mask = masks_[b];
    std::uint32_t v = pointers_[b];
    while (mask) {
      const auto pos = static_cast<std::uint32_t>(std::countr_zero(mask));
      mask &= mask - 1;
      const auto h = bh * block_.rows + pos / block_.cols;
      const auto w = bw * block_.cols + pos % block_.cols;
      data[static_cast<std::size_t>(plane * H * W + h * W + w)] = values_[v++];
    }
  }
  return out;
}

double CsbTensor::density() const {
  return static_cast<double>(values_.size()) / static_cast<double>(dense_size());
}

std::size_t CsbTensor::block_index(std::span<const std::int64_t> coord) const {
  if (coord.size() != grid_.size()) throw ShapeError("block coordinate rank mismatch");
  std::size_t index = 0;
  for (std::size_t a = 0; a < grid_.size(); ++a) {
    if (coord[a] < 0 || coord[a] >= grid_[a]) throw ShapeError("block coordinate out of range");
    index = index * static_cast<std::size_t>(grid_[a]) + static_cast<std::size_t>(coord[a]);
  }
  return index;
}

std::vector<std::int64_t> CsbTensor::block_coord(std::size_t index) const {
  if (index >= masks_.size()) throw ShapeError("block index out of range");
  std::vector<std::int64_t> coord(grid_.size());
  auto rest = static_cast<std::int64_t>(index);
  for (std::size_t a = grid_.size(); a-- > 0;) {
    coord[a] = rest % grid_[a];
    rest /= grid_[a];
  }
  return coord;
}

std::uint32_t CsbTensor::block_nnz(std::size_t index) const {
  if (index >= masks_.size()) throw ShapeError("block index out of range");
  return pointers_[index + 1] - pointers_[index];
}

Tensor CsbTensor::fetch_block(std::span<const std::int64_t> coord, BlockTransform transform) const {
  const std::size_t b = block_index(coord);
  const std::uint32_t rows = block_.rows;
  const std::uint32_t cols = block_.cols;
  Tensor out(transform == BlockTransform::Transpose ? Shape{cols, rows} : Shape{rows, cols});
  std::uint64_t mask = masks_[b];
  std::uint32_t v = pointers_[b];
  const std::uint32_t area = block_.area();
  while (mask) {
    const auto pos = static_cast<std::uint32_t>(std::countr_zero(mask));
    mask &= mask - 1;
    std::uint32_t dst = pos;
    switch (transform) {
      case BlockTransform::Identity: break;
      case BlockTransform::Rotate180: dst = area - 1 - pos; break;
      case BlockTransform::Transpose: dst = (pos % cols) * rows + pos / cols; break;
    }
    out[dst] = values_[v++];
  }
  return out;
}

std::vector<std::size_t> CsbTensor::block_order(BlockOrder order) const {
  std::int64_t K = 0;
  std::int64_t C = 0;
  if (grid_.size() == 2) {
    K = grid_[0];
    C = grid_[1];
  } else if (grid_.size() == 4 && grid_[2] == 1 && grid_[3] == 1) {
    K = grid_[0];
    C = grid_[1];
  } else {
    throw ShapeError("block traversal orders need a [K][C] weight block grid");
  }
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(K * C));
  if (order == BlockOrder::KMajor) {
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t c = 0; c < C; ++c) out.push_back(static_cast<std::size_t>(k * C + c));
  } else {
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < K; ++k) out.push_back(static_cast<std::size_t>(k * C + c));
  }
  return out;
}

std::size_t CsbTensor::metadata_bytes() const {
  const std::size_t mask_bytes = (block_.area() + 7) / 8;
  return pointers_.size() * sizeof(std::uint32_t) + masks_.size() * mask_bytes;
}

std::size_t CsbTensor::storage_bytes() const { return values_.size() * sizeof(float) + metadata_bytes(); }

void CsbTensor::write(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dense_shape_.size()));
  for (auto d : dense_shape_) put<std::int64_t>(out, d);
  put<std::uint32_t>(out, block_.rows);
  put<std::uint32_t>(out, block_.cols);
  put<std::uint64_t>(out, masks_.size());
  put<std::uint64_t>(out, values_.size());
  for (auto p : pointers_) put<std::uint32_t>(out, p);
  for (auto m : masks_) put<std::uint64_t>(out, m);
  for (auto v : values_) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw Error("failed writing CSB stream");
}

CsbTensor CsbTensor::read(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("not a CSB stream (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw FormatError("unsupported CSB version " + std::to_string(version));
  const auto rank = get<std::uint32_t>(in);
  if (rank < 2 || rank > 8) throw FormatError("implausible CSB rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get<std::int64_t>(in);
  BlockShape block{get<std::uint32_t>(in), get<std::uint32_t>(in)};
  const auto blocks = get<std::uint64_t>(in);
  const auto nvalues = get<std::uint64_t>(in);
  Shape grid;
  try {
    grid = make_grid(shape, block);
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
  if (blocks != static_cast<std::uint64_t>(shape_volume(grid))) throw FormatError("block count disagrees with shape");
  if (nvalues > static_cast<std::uint64_t>(shape_volume(shape))) throw FormatError("more values than dense elements");
  std::vector<std::uint32_t> pointers(blocks + 1);
  for (auto& p : pointers) p = get<std::uint32_t>(in);
  std::vector<std::uint64_t> masks(blocks);
  for (auto& m : masks) m = get<std::uint64_t>(in);
  std::vector<float> values(nvalues);
  for (auto& v : values) v = std::bit_cast<float>(get<std::uint32_t>(in));
  return from_parts(std::move(shape), block, std::move(pointers), std::move(masks), std::move(values));
}

void CsbTensor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write(out);
}

CsbTensor CsbTensor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CSB file '" + path.string() + "'");
  return read(in);
}

}  // namespace sta
