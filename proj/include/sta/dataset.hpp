#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "sta/tensor.hpp"

namespace sta {

// Uniform draws from a 64-bit Mersenne twister with a fixed mapping, so the
// sequences do not depend on the standard library's distributions.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Labelled single-channel images, stored back to back.
struct Dataset {
  std::int64_t channels = 1;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t classes = 0;
  std::vector<float> pixels;
  std::vector<std::int32_t> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t sample_volume() const { return channels * height * width; }

  // Gathers the listed samples into an [n][C][H][W] tensor.
  Tensor gather(std::span<const std::int64_t> indices) const;
  std::vector<std::int32_t> gather_labels(std::span<const std::int64_t> indices) const;
};

// Names of the synthetic shape classes, by label.
std::span<const char* const> shape_class_names();

// Synthetic parametric shapes on a side x side canvas: horizontal bar,
// vertical bar, two diagonals, square outline and plus sign, each at a
// random position, size and brightness, with salt noise.
Dataset make_shapes_dataset(std::int64_t count, std::uint64_t seed, std::int64_t side = 16,
                            double noise = 0.15);

// Reads a raw dataset file: 4-byte magic "SDAT", then little-endian u32
// count, channels, height, width and classes, count i32 labels and
// count * volume f32 pixels.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace sta
