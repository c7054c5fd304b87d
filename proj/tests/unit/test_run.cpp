#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "sta/error.hpp"
#include "sta/run.hpp"

using namespace sta;
namespace fs = std::filesystem;

TEST_CASE("canonical config is sorted and hashes stably") {
  RunConfig a;
  const std::string text = a.canonical();
  CHECK(text.find(' ') == std::string::npos);
  CHECK(text.find("\"act_density\"") < text.find("\"network\""));
  CHECK(a.hash() == RunConfig{}.hash());
  RunConfig b;
  b.seed = 2;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == fnv1a64(text));
}

TEST_CASE("JSON overrides") {
  RunConfig c;
  c.apply_json(R"({"sparsity": 4, "mappings": "ck,kn", "decay": false})");
  CHECK(c.sparsity == 4.0);
  CHECK_FALSE(c.decay);
  CHECK(c.resolve_mappings() == std::vector<Scheme>{Scheme::CK, Scheme::KN});
  c.mappings = "all";
  CHECK(c.resolve_mappings().size() == 4);
  CHECK_THROWS_AS(c.apply_json(R"({"sparsty": 4})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json(R"({"sparsity": "many"})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(c.apply_json("{"), ConfigError);
}

TEST_CASE("network and training resolution") {
  RunConfig c;
  c.batch = 8;
  CHECK(c.resolve_network().batch() == 8);
  c.network = "does-not-exist.json";
  CHECK_THROWS_AS(c.resolve_network(), ConfigError);
  RunConfig d;
  d.sparsity = 1.0;
  CHECK(d.training_config().sparse.is_dense());
  d.sparsity = 0.5;
  CHECK_THROWS_AS(d.training_config(), ConfigError);
  RunConfig nd;
  nd.decay = false;
  CHECK(nd.training_config().sparse.lambda == 1.0f);
}

TEST_CASE("atomic writes and manifests") {
  const fs::path dir = fs::temp_directory_path() / "sta_unit_run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file_atomic(dir / "a.csv", "x,y\n1,2\n");
  CHECK(read_file(dir / "a.csv") == "x,y\n1,2\n");
  CHECK_FALSE(fs::exists(dir / "a.csv.tmp"));

  RunConfig c;
  write_manifest(dir, "simulate", c, {"a.csv"});
  const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(m["command"] == "simulate");
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m["files"].contains("a.csv"));
  CHECK(m["seeds"]["weights"] == 1);
  fs::remove_all(dir);
}

TEST_CASE("synthetic sparsity sources") {
  RunConfig c;
  c.network = "toy-small";
  const Network net = c.resolve_network();
  const auto uni = synthetic_sparsity(net, c);
  REQUIRE(uni.size() == 3);
  CHECK(uni[0].weight_density() == doctest::Approx(0.2).epsilon(0.05));
  c.synthetic = "dense";
  for (const auto& s : synthetic_sparsity(net, c)) CHECK(s.weight_density() == 1.0);
  c.synthetic = "nonsense";
  CHECK_THROWS_AS(synthetic_sparsity(net, c), ConfigError);
  CHECK_THROWS_AS(load_sparsity("/nonexistent/dir", net), ConfigError);
}
