#include <doctest.h>

#include "sta/error.hpp"
#include "sta/workload.hpp"

using namespace sta;

namespace {

// Brute-force count of MACs whose input coordinate falls inside the
// unpadded input.
std::uint64_t brute_inside(const LayerShape& l) {
  std::uint64_t count = 0;
  for (std::int64_t p = 0; p < l.P; ++p)
    for (std::int64_t q = 0; q < l.Q; ++q)
      for (std::int64_t r = 0; r < l.R; ++r)
        for (std::int64_t s = 0; s < l.S; ++s) {
          const auto h = p * l.stride + r - l.pad;
          const auto w = q * l.stride + s - l.pad;
          if (h >= 0 && h < l.in_height() && w >= 0 && w < l.in_width()) ++count;
        }
  return count * static_cast<std::uint64_t>(l.N * l.C * l.K);
}

}  // namespace

TEST_CASE("dense MAC counts of small layers") {
  CHECK(dense_macs(LayerShape::conv("a", 1, 1, 1, 1, 1, 1, 1), Phase::Forward) == 1);
  CHECK(dense_macs(LayerShape::conv("b", 2, 3, 4, 3, 3, 5, 5), Phase::Forward) == 5400);
  CHECK(dense_macs(LayerShape::fc("c", 1, 64, 10), Phase::Forward) == 640);
}

TEST_CASE("stride one without padding gives equal counts in all phases") {
  const auto l = LayerShape::conv("x", 4, 8, 16, 3, 3, 6, 6);
  const auto fw = dense_macs(l, Phase::Forward);
  CHECK(dense_macs(l, Phase::Backward) == fw);
  CHECK(dense_macs(l, Phase::WeightUpdate) == fw);
}

TEST_CASE("padded and strided layers count only in-bounds terms") {
  for (auto l : {LayerShape::conv("p", 2, 3, 5, 3, 3, 8, 8, 1, 1), LayerShape::conv("s", 2, 3, 5, 4, 4, 4, 4, 2, 1),
                 LayerShape::conv("t", 1, 2, 2, 3, 3, 3, 3, 2, 0)}) {
    CAPTURE(l.name);
    CHECK(dense_macs(l, Phase::Forward) == static_cast<std::uint64_t>(l.N * l.C * l.K * l.R * l.S * l.P * l.Q));
    CHECK(dense_macs(l, Phase::Backward) == brute_inside(l));
    CHECK(dense_macs(l, Phase::WeightUpdate) == brute_inside(l));
  }
}

TEST_CASE("pool layers perform no MACs") {
  const auto p = LayerShape::pool("pool", 4, 8, 4, 4);
  for (Phase ph : kAllPhases) CHECK(dense_macs(p, ph) == 0);
  CHECK(p.weight_count() == 0);
}

TEST_CASE("sparse MACs scale and round up") {
  const auto l = LayerShape::conv("b", 2, 3, 4, 3, 3, 5, 5);
  CHECK(sparse_macs(l, Phase::Forward, 0.2) == 1080);
  CHECK(sparse_macs(l, Phase::Forward, 1.0) == 5400);
  CHECK(sparse_macs(l, Phase::Forward, 0.0) == 0);
  CHECK(sparse_macs(LayerShape::fc("f", 1, 3, 1), Phase::Forward, 0.5) == 2);
  std::uint64_t prev = 0;
  for (int i = 0; i <= 100; ++i) {
    const auto m = sparse_macs(l, Phase::Backward, i / 100.0);
    CHECK(m >= prev);
    prev = m;
  }
  CHECK_THROWS_AS(sparse_macs(l, Phase::Forward, 1.5), ConfigError);
  CHECK_THROWS_AS(sparse_macs(l, Phase::Forward, -0.1), ConfigError);
}

TEST_CASE("layer validation rejects impossible shapes") {
  CHECK_THROWS_AS(LayerShape::conv("s3", 1, 1, 1, 3, 3, 2, 2, 3).validate(), ConfigError);
  CHECK_THROWS_AS(LayerShape::conv("z", 1, 0, 1, 3, 3, 2, 2).validate(), ConfigError);
  CHECK_THROWS_AS(LayerShape::conv("pad", 1, 1, 1, 1, 1, 2, 2, 1, 1).validate(), ConfigError);
  CHECK_NOTHROW(LayerShape::conv("ok", 1, 1, 1, 3, 3, 2, 2, 2, 1).validate());
}

TEST_CASE("presets are valid and survive a JSON round trip") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const Network net = preset_network(name);
    CHECK_NOTHROW(net.validate());
    const Network back = parse_network(network_to_json(net));
    CHECK(back.layers == net.layers);
    CHECK(back.total_weights() == net.total_weights());
  }
  const Network toy = preset_network("toy");
  CHECK(toy.total_weights() <= 100000);
  CHECK(preset_network("toy", 8).batch() == 8);
  CHECK_THROWS_AS(preset_network("nope"), ConfigError);
}

TEST_CASE("network parsing reports malformed input") {
  CHECK_THROWS_AS(parse_network("{"), ConfigError);
  CHECK_THROWS_AS(parse_network(R"({"name":"x","layers":[]})"), ConfigError);
  // fc fed by a conv whose output volume does not match
  CHECK_THROWS_AS(parse_network(R"({"name":"x","layers":[
      {"name":"c","kind":"conv","N":2,"C":1,"K":2,"R":3,"S":3,"P":4,"Q":4},
      {"name":"f","kind":"fc","N":2,"C":30,"K":2}]})"),
                  ConfigError);
}

TEST_CASE("weight offsets partition the flat weight vector") {
  const Network net = preset_network("toy");
  const auto off = net.weight_offsets();
  REQUIRE(off.size() == net.layers.size());
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(off[i] == acc);
    acc += net.layers[i].weight_count();
  }
  CHECK(acc == net.total_weights());
}
