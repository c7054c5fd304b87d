#include "sta/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>

#include "sta/error.hpp"

namespace sta {

namespace {

constexpr std::array<const char*, 6> kClassNames{"hbar", "vbar", "diag", "antidiag", "square", "plus"};

struct Canvas {
  std::int64_t side;
  float* px;
  void set(std::int64_t y, std::int64_t x, float v) {
    if (y >= 0 && y < side && x >= 0 && x < side) px[y * side + x] = std::max(px[y * side + x], v);
  }
};

void draw(Canvas& c, int label, std::mt19937_64& rng) {
  const std::int64_t side = c.side;
  const auto v = static_cast<float>(0.6 + 0.4 * uniform01(rng));
  switch (label) {
    case 0:
    case 1: {
      const std::int64_t len = uniform_int(rng, side / 2 - 2, side - 4);
      const std::int64_t thick = uniform_int(rng, 1, 2);
      const std::int64_t along = uniform_int(rng, 0, side - len);
      const std::int64_t across = uniform_int(rng, 1, side - 1 - thick);
      for (std::int64_t a = 0; a < len; ++a)
        for (std::int64_t t = 0; t < thick; ++t) {
          if (label == 0)
            c.set(across + t, along + a, v);
          else
            c.set(along + a, across + t, v);
        }
      break;
    }
    case 2:
    case 3: {
      const std::int64_t len = uniform_int(rng, side / 2 - 2, side - 4);
      const std::int64_t y0 = uniform_int(rng, 0, side - len);
      const std::int64_t x0 = uniform_int(rng, 0, side - len);
      for (std::int64_t a = 0; a < len; ++a) {
        const std::int64_t x = label == 2 ? x0 + a : x0 + len - 1 - a;
        c.set(y0 + a, x, v);
        c.set(y0 + a, x + 1, v);
      }
      break;
    }
    case 4: {
      const std::int64_t size = uniform_int(rng, 5, side / 2 + 2);
      const std::int64_t y0 = uniform_int(rng, 0, side - size);
      const std::int64_t x0 = uniform_int(rng, 0, side - size);
      for (std::int64_t a = 0; a < size; ++a) {
        c.set(y0, x0 + a, v);
        c.set(y0 + size - 1, x0 + a, v);
        c.set(y0 + a, x0, v);
        c.set(y0 + a, x0 + size - 1, v);
      }
      break;
    }
    default: {
      const std::int64_t arm = uniform_int(rng, 2, side / 4 + 1);
      const std::int64_t cy = uniform_int(rng, arm, side - 1 - arm);
      const std::int64_t cx = uniform_int(rng, arm, side - 1 - arm);
      for (std::int64_t a = -arm; a <= arm; ++a) {
        c.set(cy + a, cx, v);
        c.set(cy, cx + a, v);
      }
      break;
    }
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated dataset file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::span<const char* const> shape_class_names() { return kClassNames; }

Tensor Dataset::gather(std::span<const std::int64_t> indices) const {
  const std::int64_t vol = sample_volume();
  Tensor out({static_cast<std::int64_t>(indices.size()), channels, height, width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = pixels.begin() + indices[i] * vol;
    std::copy(src, src + vol, out.storage().begin() + static_cast<std::int64_t>(i) * vol);
  }
  return out;
}

std::vector<std::int32_t> Dataset::gather_labels(std::span<const std::int64_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

Dataset make_shapes_dataset(std::int64_t count, std::uint64_t seed, std::int64_t side, double noise) {
  if (count <= 0) throw ConfigError("dataset size must be positive");
  if (side < 8) throw ConfigError("shape canvas must be at least 8 pixels wide");
  Dataset d;
  d.height = d.width = side;
  d.classes = static_cast<std::int64_t>(kClassNames.size());
  d.pixels.assign(static_cast<std::size_t>(count * side * side), 0.0f);
  d.labels.resize(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % d.classes);
    d.labels[static_cast<std::size_t>(i)] = label;
    Canvas c{side, d.pixels.data() + i * side * side};
    draw(c, label, rng);
    for (std::int64_t p = 0; p < side * side; ++p)
      if (uniform01(rng) < noise) c.px[p] = std::max(c.px[p], static_cast<float>(0.9 * uniform01(rng)));
  }
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write("SDAT", 4);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(data.channels));
  put_u32(out, static_cast<std::uint32_t>(data.height));
  put_u32(out, static_cast<std::uint32_t>(data.width));
  put_u32(out, static_cast<std::uint32_t>(data.classes));
  for (auto l : data.labels) put_u32(out, static_cast<std::uint32_t>(l));
  for (float p : data.pixels) put_u32(out, std::bit_cast<std::uint32_t>(p));
  if (!out) throw Error("failed writing dataset");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::string_view(magic.data(), 4) != "SDAT")
    throw FormatError("'" + path.string() + "' is not a dataset file");
  Dataset d;
  const auto count = get_u32(in);
  d.channels = get_u32(in);
  d.height = get_u32(in);
  d.width = get_u32(in);
  d.classes = get_u32(in);
  if (count == 0 || d.channels == 0 || d.height == 0 || d.width == 0 || d.classes < 2)
    throw FormatError("dataset header has empty dimensions");
  d.labels.resize(count);
  for (auto& l : d.labels) {
    l = static_cast<std::int32_t>(get_u32(in));
    if (l < 0 || l >= d.classes) throw FormatError("dataset label out of range");
  }
  d.pixels.resize(static_cast<std::size_t>(count) * static_cast<std::size_t>(d.sample_volume()));
  for (auto& p : d.pixels) p = std::bit_cast<float>(get_u32(in));
  return d;
}

}  // namespace sta
