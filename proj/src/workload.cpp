#include "sta/workload.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sta/error.hpp"

namespace sta {

using json = nlohmann::json;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Fc: return "fc";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Forward: return "fw";
    case Phase::Backward: return "bw";
    case Phase::WeightUpdate: return "wu";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "conv") return LayerKind::Conv;
  if (text == "fc") return LayerKind::Fc;
  if (text == "pool") return LayerKind::Pool;
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

Phase parse_phase(std::string_view text) {
  if (text == "fw" || text == "forward") return Phase::Forward;
  if (text == "bw" || text == "backward") return Phase::Backward;
  if (text == "wu" || text == "weight_update") return Phase::WeightUpdate;
  throw ConfigError("unknown phase '" + std::string(text) + "'");
}

LayerShape LayerShape::conv(std::string name, std::int64_t n, std::int64_t c, std::int64_t k, std::int64_t r,
                            std::int64_t s, std::int64_t p, std::int64_t q, std::int64_t stride, std::int64_t pad,
                            bool relu, bool norm) {
  LayerShape l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv;
  l.N = n, l.C = c, l.K = k, l.R = r, l.S = s, l.P = p, l.Q = q;
  l.stride = stride, l.pad = pad, l.relu = relu, l.norm = norm;
  return l;
}

LayerShape LayerShape::fc(std::string name, std::int64_t n, std::int64_t c, std::int64_t k, bool relu) {
  LayerShape l;
  l.name = std::move(name);
  l.kind = LayerKind::Fc;
  l.N = n, l.C = c, l.K = k;
  l.relu = relu;
  return l;
}

LayerShape LayerShape::pool(std::string name, std::int64_t n, std::int64_t channels, std::int64_t p, std::int64_t q,
                            std::int64_t window) {
  LayerShape l;
  l.name = std::move(name);
  l.kind = LayerKind::Pool;
  l.N = n, l.C = channels, l.K = channels;
  l.R = window, l.S = window, l.P = p, l.Q = q;
  l.stride = window;
  l.relu = false;
  return l;
}

void LayerShape::validate() const {
  auto fail = [&](const std::string& why) { throw ConfigError("layer '" + name + "': " + why); };
  if (N < 1 || C < 1 || K < 1 || R < 1 || S < 1 || P < 1 || Q < 1) fail("all dimensions must be >= 1");
  if (pad < 0) fail("pad must be non-negative");
  if (stride != 1 && stride != 2) fail("only stride 1 or 2 is supported");
  switch (kind) {
    case LayerKind::Fc:
      if (R != 1 || S != 1 || P != 1 || Q != 1 || stride != 1 || pad != 0)
        fail("fc layers require R = S = P = Q = 1, stride 1 and no padding");
      break;
    case LayerKind::Pool:
      if (C != K) fail("pool layers keep the channel count (C == K)");
      if (R != stride || S != stride || pad != 0) fail("pool window must equal its stride, without padding");
      if (relu || norm) fail("pool layers take no ReLU or normalization");
      break;
    case LayerKind::Conv:
      if (pad >= R || pad >= S) fail("padding must be smaller than the kernel");
      break;
  }
  if (in_height() < 1 || in_width() < 1) fail("input activation extent must be >= 1");
}

namespace {

// Number of (p, r) pairs whose input coordinate p*stride + r - pad is inside [0, extent).
std::uint64_t valid_pairs(std::int64_t out, std::int64_t kernel, std::int64_t stride, std::int64_t pad,
                          std::int64_t extent) {
  std::uint64_t count = 0;
  for (std::int64_t p = 0; p < out; ++p) {
    for (std::int64_t r = 0; r < kernel; ++r) {
      const std::int64_t h = p * stride + r - pad;
      if (h >= 0 && h < extent) ++count;
    }
  }
  return count;
}

}  // namespace

std::uint64_t dense_macs(const LayerShape& layer, Phase phase) {
  if (!layer.has_weights()) return 0;
  const auto nck = static_cast<std::uint64_t>(layer.N * layer.C * layer.K);
  if (phase == Phase::Forward) return nck * static_cast<std::uint64_t>(layer.R * layer.S * layer.P * layer.Q);
  return nck * valid_pairs(layer.P, layer.R, layer.stride, layer.pad, layer.in_height()) *
         valid_pairs(layer.Q, layer.S, layer.stride, layer.pad, layer.in_width());
}

std::uint64_t sparse_macs(const LayerShape& layer, Phase phase, double density) {
  if (!(density >= 0.0 && density <= 1.0)) throw ConfigError("density must lie in [0, 1]");
  const auto dense = dense_macs(layer, phase);
  if (density == 1.0) return dense;
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(dense) * density));
}

std::int64_t Network::total_weights() const {
  std::int64_t total = 0;
  for (const auto& l : layers) total += l.weight_count();
  return total;
}

std::vector<std::size_t> Network::weighted_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].has_weights()) out.push_back(i);
  return out;
}

std::vector<std::int64_t> Network::weight_offsets() const {
  std::vector<std::int64_t> out;
  std::int64_t off = 0;
  for (const auto& l : layers) {
    out.push_back(off);
    off += l.weight_count();
  }
  return out;
}

Network Network::with_batch(std::int64_t n) const {
  Network copy = *this;
  for (auto& l : copy.layers) l.N = n;
  return copy;
}

void Network::validate() const {
  if (layers.empty()) throw ConfigError("network '" + name + "' has no layers");
  for (const auto& l : layers) l.validate();
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const auto& prev = layers[i - 1];
    const auto& cur = layers[i];
    const std::string where = "layers '" + prev.name + "' -> '" + cur.name + "': ";
    if (cur.N != prev.N) throw ConfigError(where + "minibatch sizes differ");
    if (cur.kind == LayerKind::Fc) {
      if (cur.C != prev.output_volume())
        throw ConfigError(where + "fc input width " + std::to_string(cur.C) + " != previous output volume " +
                          std::to_string(prev.output_volume()));
    } else if (cur.C != prev.K || cur.in_height() != prev.P || cur.in_width() != prev.Q) {
      throw ConfigError(where + "activation volumes do not match");
    }
  }
}

namespace {

LayerShape layer_from_json(const json& j) {
  LayerShape l;
  try {
    l.name = j.value("name", std::string{});
    l.kind = parse_layer_kind(j.at("kind").get<std::string>());
    l.N = j.at("N").get<std::int64_t>();
    l.C = j.at("C").get<std::int64_t>();
    l.K = j.value("K", l.kind == LayerKind::Pool ? l.C : std::int64_t{1});
    l.R = j.value("R", std::int64_t{1});
    l.S = j.value("S", l.R);
    l.P = j.value("P", std::int64_t{1});
    l.Q = j.value("Q", l.P);
    l.stride = j.value("stride", l.kind == LayerKind::Pool ? l.R : std::int64_t{1});
    l.pad = j.value("pad", std::int64_t{0});
    l.relu = j.value("relu", l.kind == LayerKind::Conv);
    l.norm = j.value("norm", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad layer entry: ") + e.what());
  }
  return l;
}

json layer_to_json(const LayerShape& l) {
  return json{{"name", l.name}, {"kind", std::string(to_string(l.kind))},
              {"N", l.N}, {"C", l.C}, {"K", l.K}, {"R", l.R}, {"S", l.S}, {"P", l.P}, {"Q", l.Q},
              {"stride", l.stride}, {"pad", l.pad}, {"relu", l.relu}, {"norm", l.norm}};
}

}  // namespace

Network parse_network(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
    throw ConfigError("network config needs a 'layers' array");
  Network net;
  net.name = j.value("name", std::string{"custom"});
  for (const auto& entry : j["layers"]) net.layers.push_back(layer_from_json(entry));
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].name.empty()) net.layers[i].name = "layer" + std::to_string(i);
  net.validate();
  return net;
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string network_to_json(const Network& net) {
  json j{{"name", net.name}, {"layers", json::array()}};
  for (const auto& l : net.layers) j["layers"].push_back(layer_to_json(l));
  return j.dump(2);
}

Network preset_network(std::string_view name, std::int64_t batch) {
  Network net;
  net.name = std::string(name);
  if (name == "toy") {
    const std::int64_t n = batch > 0 ? batch : 32;
    net.layers = {
        LayerShape::conv("conv1", n, 1, 16, 4, 4, 8, 8, 2, 1, true, true),
        LayerShape::conv("conv2", n, 16, 32, 3, 3, 8, 8, 1, 1, true, true),
        LayerShape::conv("conv3", n, 32, 64, 4, 4, 4, 4, 2, 1, true, true),
        LayerShape::conv("conv4", n, 64, 64, 3, 3, 4, 4, 1, 1, true, true),
        LayerShape::fc("fc", n, 64 * 4 * 4, 6),
    };
  } else if (name == "toy-small") {
    const std::int64_t n = batch > 0 ? batch : 8;
    net.layers = {
        LayerShape::conv("conv1", n, 1, 4, 3, 3, 8, 8, 1, 1, true, true),
        LayerShape::pool("pool1", n, 4, 4, 4),
        LayerShape::conv("conv2", n, 4, 8, 3, 3, 4, 4, 1, 1, true, true),
        LayerShape::fc("fc", n, 8 * 4 * 4, 6),
    };
  } else if (name == "wide") {
    const std::int64_t n = batch > 0 ? batch : 32;
    net.layers = {
        LayerShape::conv("conv_a", n, 32, 128, 3, 3, 8, 8, 1, 1),
        LayerShape::conv("conv_b", n, 128, 256, 4, 4, 4, 4, 2, 1),
        LayerShape::conv("conv_c", n, 256, 256, 3, 3, 4, 4, 1, 1),
        LayerShape::fc("fc", n, 256 * 4 * 4, 64),
    };
  } else {
    throw ConfigError("unknown network preset '" + std::string(name) + "'");
  }
  net.validate();
  return net;
}

std::vector<std::string> preset_names() { return {"toy", "toy-small", "wide"}; }

}  // namespace sta
