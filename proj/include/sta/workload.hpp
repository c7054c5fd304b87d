#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sta {

enum class LayerKind { Conv, Fc, Pool };

// The three convolutions of one SGD iteration.
enum class Phase { Forward, Backward, WeightUpdate };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::Forward, Phase::Backward, Phase::WeightUpdate};

std::string_view to_string(LayerKind kind);
std::string_view to_string(Phase phase);
LayerKind parse_layer_kind(std::string_view text);
Phase parse_phase(std::string_view text);

// One layer of the 7-D operation space (N, C, K, R, S, P, Q).
//
// Weights are laid out [K][C][R][S] (fc: [K][C]); activations are NCHW.
// Pool layers are MAC-free pass-through layers (2-D max pooling, C == K);
// they reshape activations and force the back-propagated gradient dense.
struct LayerShape {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::int64_t N = 1;
  std::int64_t C = 1;
  std::int64_t K = 1;
  std::int64_t R = 1;
  std::int64_t S = 1;
  std::int64_t P = 1;
  std::int64_t Q = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  bool relu = true;
  // Parameter-free batch normalization of the output (per channel, over the
  // minibatch and spatial positions) before the ReLU. Costs no MACs.
  bool norm = false;

  static LayerShape conv(std::string name, std::int64_t n, std::int64_t c, std::int64_t k, std::int64_t r,
                         std::int64_t s, std::int64_t p, std::int64_t q, std::int64_t stride = 1,
                         std::int64_t pad = 0, bool relu = true, bool norm = false);
  static LayerShape fc(std::string name, std::int64_t n, std::int64_t c, std::int64_t k, bool relu = false);
  static LayerShape pool(std::string name, std::int64_t n, std::int64_t channels, std::int64_t p,
                         std::int64_t q, std::int64_t window = 2);

  // Input activation extent: (P - 1) * stride + R - 2 * pad.
  std::int64_t in_height() const { return (P - 1) * stride + R - 2 * pad; }
  std::int64_t in_width() const { return (Q - 1) * stride + S - 2 * pad; }

  bool has_weights() const { return kind != LayerKind::Pool; }
  std::int64_t weight_count() const { return has_weights() ? K * C * R * S : 0; }
  std::int64_t input_volume() const { return C * in_height() * in_width(); }
  std::int64_t output_volume() const { return K * P * Q; }

  // Throws ConfigError when an invariant does not hold.
  void validate() const;

  bool operator==(const LayerShape&) const = default;
};

// Multiply-accumulates performed by the dense computation of `phase`.
//
// Forward counts the whole loop nest (N*C*K*R*S*P*Q). Backward and weight
// update count the MACs whose activation-side operand lies inside the
// unpadded input, i.e. the non-trivial terms of the transposed and
// correlation convolutions; with pad = 0 all three coincide.
std::uint64_t dense_macs(const LayerShape& layer, Phase phase);

// dense_macs scaled by a non-zero density, rounded up. Throws ConfigError
// for densities outside [0, 1].
std::uint64_t sparse_macs(const LayerShape& layer, Phase phase, double density);

struct Network {
  std::string name;
  std::vector<LayerShape> layers;

  // Adjacent-layer volume compatibility and per-layer invariants.
  void validate() const;

  std::int64_t batch() const { return layers.empty() ? 0 : layers.front().N; }
  std::int64_t total_weights() const;
  std::vector<std::size_t> weighted_layers() const;
  // First global weight index of each layer (pool layers own an empty range).
  std::vector<std::int64_t> weight_offsets() const;

  Network with_batch(std::int64_t n) const;
};

Network parse_network(std::string_view json_text);
Network load_network(const std::filesystem::path& path);
std::string network_to_json(const Network& net);

// Bundled networks: "toy" (trainable), "toy-small" (unit-test sized) and
// "wide" (cost-model only, every layer has K >= 64).
Network preset_network(std::string_view name, std::int64_t batch = 0);
std::vector<std::string> preset_names();

}  // namespace sta
