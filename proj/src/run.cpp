#include "sta/run.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sta/error.hpp"
#include "sta/sparsetrain.hpp"

namespace sta {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json config_json(const RunConfig& c) {
  return json{{"network", c.network},
              {"sparsity", c.sparsity},
              {"lambda", c.lambda},
              {"cutoff", c.cutoff},
              {"decay", c.decay},
              {"batch", c.batch},
              {"seed", c.seed},
              {"data_seed", c.data_seed},
              {"epochs", c.epochs},
              {"train_samples", c.train_samples},
              {"val_samples", c.val_samples},
              {"eta", c.eta},
              {"snapshot_every", c.snapshot_every},
              {"oracle", c.oracle},
              {"array", c.array},
              {"mappings", c.mappings},
              {"balanced", c.balanced},
              {"energy", c.energy},
              {"masks", c.masks},
              {"synthetic", c.synthetic},
              {"act_density", c.act_density},
              {"scale_to", c.scale_to},
              {"phase", c.phase}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Shortest round-trip text for a double, so CSVs are stable and exact.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  for (int digits = 6; digits < 17; ++digits) {
    char trial[32];
    std::snprintf(trial, sizeof trial, "%.*g", digits, v);
    std::sscanf(trial, "%lf", &back);
    if (back == v) return trial;
  }
  return buf;
}

template <class T>
void read_field(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

void RunConfig::apply_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  const json known = config_json(*this);
  for (const auto& item : j.items())
    if (!known.contains(item.key())) throw ConfigError("unknown run config key '" + item.key() + "'");
  try {
    read_field(j, "network", network);
    read_field(j, "sparsity", sparsity);
    read_field(j, "lambda", lambda);
    read_field(j, "cutoff", cutoff);
    read_field(j, "decay", decay);
    read_field(j, "batch", batch);
    read_field(j, "seed", seed);
    read_field(j, "data_seed", data_seed);
    read_field(j, "epochs", epochs);
    read_field(j, "train_samples", train_samples);
    read_field(j, "val_samples", val_samples);
    read_field(j, "eta", eta);
    read_field(j, "snapshot_every", snapshot_every);
    read_field(j, "oracle", oracle);
    read_field(j, "array", array);
    read_field(j, "mappings", mappings);
    read_field(j, "balanced", balanced);
    read_field(j, "energy", energy);
    read_field(j, "masks", masks);
    read_field(j, "synthetic", synthetic);
    read_field(j, "act_density", act_density);
    read_field(j, "scale_to", scale_to);
    read_field(j, "phase", phase);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config value: ") + e.what());
  }
}

std::string RunConfig::canonical() const { return config_json(*this).dump(); }

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

Network RunConfig::resolve_network() const {
  for (const auto& name : preset_names())
    if (network == name) return preset_network(network, batch);
  if (!fs::exists(network))
    throw ConfigError("'" + network + "' is neither a preset nor an existing network file");
  Network net = load_network(network);
  return batch > 0 ? net.with_batch(batch) : net;
}

ArrayConfig RunConfig::resolve_array() const { return ArrayConfig::parse(array); }

EnergyTable RunConfig::resolve_energy() const {
  if (energy.empty()) return EnergyTable{};
  return EnergyTable::load(energy);
}

std::vector<Scheme> RunConfig::resolve_mappings() const {
  if (mappings == "all") return {kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<Scheme> out;
  std::stringstream in(mappings);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_scheme(item));
  if (out.empty()) throw ConfigError("no mapping selected");
  return out;
}

TrainingConfig RunConfig::training_config() const {
  if (!(sparsity >= 1.0)) throw ConfigError("sparsity factor must be at least 1");
  TrainingConfig t;
  t.network = resolve_network();
  if (sparsity == 1.0) {
    t.sparse = SparseTrainConfig::dense(static_cast<float>(eta), seed);
  } else {
    t.sparse.target_density = 1.0 / sparsity;
    t.sparse.eta = static_cast<float>(eta);
    t.sparse.lambda = static_cast<float>(lambda);
    t.sparse.cutoff = cutoff;
    t.sparse.seed = seed;
    if (!decay) t.sparse = t.sparse.without_decay();
  }
  t.sparse.oracle = oracle;
  t.epochs = epochs;
  t.train_samples = train_samples;
  t.val_samples = val_samples;
  t.data_seed = data_seed;
  t.snapshot_every = snapshot_every;
  return t;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_manifest(const fs::path& dir, std::string_view command, const RunConfig& config,
                    const std::vector<std::string>& files) {
  json hashes = json::object();
  for (const auto& f : files) hashes[f] = hex64(fnv1a64(read_file(dir / f)));
  const json manifest{{"tool", "sta"},
                      {"version", std::string(kToolVersion)},
                      {"command", std::string(command)},
                      {"config", json::parse(config.canonical())},
                      {"config_hash", hex64(config.hash())},
                      {"seeds", {{"weights", config.seed}, {"data", config.data_seed}}},
                      {"files", hashes}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string epochs_csv(const TrainingResult& result) {
  std::ostringstream out;
  out << "epoch,iteration,train_loss,train_accuracy,val_accuracy,density\n";
  for (const auto& e : result.epochs)
    out << e.epoch << ',' << e.iteration << ',' << num(e.train_loss) << ',' << num(e.train_accuracy) << ','
        << num(e.val_accuracy) << ',' << num(e.density) << '\n';
  return out.str();
}

std::string iterations_csv(const TrainingResult& result) {
  std::ostringstream out;
  out << "iteration,loss,density,threshold,inserted,evicted,overlap\n";
  for (const auto& i : result.iterations) {
    out << i.iteration << ',' << num(i.loss) << ',' << num(i.density) << ',' << num(i.threshold) << ','
        << i.inserted << ',' << i.evicted << ',';
    if (i.overlap) out << num(*i.overlap);
    out << '\n';
  }
  return out.str();
}

namespace {

std::string csb_bytes(const CsbTensor& t) {
  std::ostringstream out(std::ios::binary);
  t.write(out);
  return out.str();
}

}  // namespace

std::vector<std::string> save_training(const fs::path& dir, const Network& net, const TrainingResult& result) {
  std::vector<std::string> files;
  auto put = [&](const std::string& rel, std::string_view contents) {
    write_file_atomic(dir / rel, contents);
    files.push_back(rel);
  };
  put("epochs.csv", epochs_csv(result));
  put("iterations.csv", iterations_csv(result));
  put("network.json", network_to_json(net) + "\n");
  if (result.state) {
    std::ostringstream ck(std::ios::binary);
    result.state->save_checkpoint(ck);
    put("checkpoint.stck", ck.str());
  }
  const auto weighted = net.weighted_layers();
  if (!result.snapshots.empty()) {
    const auto& last = result.final_masks();
    for (std::size_t i = 0; i < weighted.size(); ++i)
      put("masks/" + net.layers[weighted[i]].name + ".csb", csb_bytes(last.layers.at(i)));
    for (std::size_t s = 0; s + 1 < result.snapshots.size(); ++s) {
      const auto& snap = result.snapshots[s];
      for (std::size_t i = 0; i < weighted.size(); ++i)
        put("snapshots/" + std::to_string(snap.iteration) + "/" + net.layers[weighted[i]].name + ".csb",
            csb_bytes(snap.layers.at(i)));
    }
  }
  for (std::size_t i = 0; i < result.activations.size() && i < weighted.size(); ++i)
    put("activations/" + net.layers[weighted[i]].name + ".csb", csb_bytes(result.activations[i]));
  return files;
}

std::vector<LayerSparsity> load_sparsity(const fs::path& dir, const Network& net) {
  if (!fs::is_directory(dir)) throw ConfigError("mask directory '" + dir.string() + "' does not exist");
  std::vector<LayerSparsity> out;
  for (std::size_t idx : net.weighted_layers()) {
    const LayerShape& l = net.layers[idx];
    const fs::path wpath = dir / "masks" / (l.name + ".csb");
    if (!fs::exists(wpath)) throw ConfigError("missing mask file '" + wpath.string() + "'");
    LayerSparsity s;
    s.weights = CsbTensor::load(wpath);
    const Shape want = l.kind == LayerKind::Fc ? Shape{l.K, l.C} : Shape{l.K, l.C, l.R, l.S};
    if (s.weights->dense_shape() != want)
      throw ShapeError("mask '" + wpath.string() + "' does not match layer '" + l.name + "'");
    const fs::path apath = dir / "activations" / (l.name + ".csb");
    if (fs::exists(apath)) {
      s.activations = CsbTensor::load(apath);
      const auto& shape = s.activations->dense_shape();
      const bool fits = shape.size() == 4 && shape[1] == l.C && shape[2] == l.in_height() && shape[3] == l.in_width();
      if (!fits) throw ShapeError("activation file '" + apath.string() + "' does not match layer '" + l.name + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LayerSparsity> synthetic_sparsity(const Network& net, const RunConfig& config) {
  if (!(config.sparsity >= 1.0)) throw ConfigError("sparsity factor must be at least 1");
  if (!(config.act_density > 0.0 && config.act_density <= 1.0))
    throw ConfigError("activation density must lie in (0, 1]");
  const double density = 1.0 / config.sparsity;
  std::vector<LayerSparsity> out;
  std::uint64_t salt = 0;
  for (std::size_t idx : net.weighted_layers()) {
    const LayerShape& l = net.layers[idx];
    LayerSparsity s;
    s.activation_density = config.act_density;
    if (config.synthetic == "uniform")
      s.weights = uniform_weight_mask(l, density);
    else if (config.synthetic == "random")
      s.weights = random_weight_mask(l, density, 0.4, config.seed * 1000003u + salt);
    else if (config.synthetic != "dense")
      throw ConfigError("unknown synthetic mask kind '" + config.synthetic + "'");
    ++salt;
    out.push_back(std::move(s));
  }
  return out;
}

WaveOverheads wave_overheads(const Network& net, std::span<const LayerSparsity> sparsity, Scheme scheme,
                             Phase phase, const ArrayConfig& array) {
  const auto weighted = net.weighted_layers();
  if (sparsity.size() != weighted.size()) throw ShapeError("one sparsity entry per weighted layer is required");
  WaveOverheads out;
  const EnergyTable energy;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    const LayerShape& l = net.layers[weighted[i]];
    const Mapping m = make_mapping(l, array, scheme);
    const PhaseCost before = phase_cost(l, m, phase, sparsity[i], false, energy, array);
    const PhaseCost after = phase_cost(l, m, phase, sparsity[i], true, energy, array);
    for (std::size_t w = 0; w < before.trace.size(); ++w) {
      const double mean = before.trace[w].mean_load;
      if (mean <= 0.0) continue;
      out.layer.push_back(l.name);
      out.unbalanced.push_back(std::max(0.0, (before.trace[w].cycles - array.wave_cycles) / mean - 1.0));
      out.balanced.push_back(std::max(0.0, (after.trace[w].cycles - array.wave_cycles) / mean - 1.0));
    }
  }
  return out;
}

SimulationSummary simulate(const Network& net, std::span<const LayerSparsity> sparsity,
                           std::span<const Scheme> schemes, bool balanced, const EnergyTable& energy,
                           const ArrayConfig& array) {
  SimulationSummary s;
  Schedule dense_schedule;
  dense_schedule.balanced = false;
  s.dense = network_cost(net, dense_schedule, {}, energy, array);
  std::vector<double> wd, ad;
  for (const auto& sp : sparsity) {
    wd.push_back(sp.weight_density());
    ad.push_back(sp.input_density());
  }
  s.ideal = ideal_cost(net, wd, ad, energy, array);
  for (Scheme scheme : schemes) {
    Schedule schedule;
    schedule.uniform = scheme;
    schedule.balanced = balanced;
    s.runs.push_back(network_cost(net, schedule, sparsity, energy, array));
  }
  return s;
}

namespace {

std::string mapping_of(const NetworkCost& c) {
  return c.rows.empty() ? std::string("-") : std::string(to_string(c.rows.front().cost.scheme));
}

bool balanced_of(const NetworkCost& c) {
  for (const auto& r : c.rows)
    if (r.cost.balanced) return true;
  return false;
}

}  // namespace

std::string summary_csv(const SimulationSummary& s) {
  std::ostringstream out;
  out << "run,mapping,balanced,cycles,e_mac,e_rf,e_glb,e_dram,e_total,speedup,energy_reduction,ideal_speedup,"
         "fraction_of_ideal\n";
  const double dense_cycles = s.dense.cycles();
  const double dense_energy = s.dense.energy().total();
  const double ideal_speedup = dense_cycles / s.ideal.cycles();
  auto row = [&](const std::string& run, const NetworkCost& c) {
    const auto e = c.energy();
    const double speedup = dense_cycles / c.cycles();
    out << run << ",\"" << mapping_of(c) << "\"," << (balanced_of(c) ? 1 : 0) << ',' << num(c.cycles()) << ','
        << num(e.mac) << ',' << num(e.rf) << ',' << num(e.glb) << ',' << num(e.dram) << ',' << num(e.total()) << ','
        << num(speedup) << ',' << num(dense_energy / e.total()) << ',' << num(ideal_speedup) << ','
        << num(speedup / ideal_speedup) << '\n';
  };
  row("dense", s.dense);
  row("ideal", s.ideal);
  for (const auto& r : s.runs) row("sparse", r);
  return out.str();
}

std::string phase_csv(const SimulationSummary& s) {
  std::ostringstream out;
  out << "run,mapping,balanced,phase,cycles,e_mac,e_rf,e_glb,e_dram,e_total\n";
  auto rows = [&](const std::string& run, const NetworkCost& c) {
    for (Phase p : kAllPhases) {
      const auto slot = static_cast<std::size_t>(p);
      const auto& e = c.phase_energy[slot];
      out << run << ",\"" << mapping_of(c) << "\"," << (balanced_of(c) ? 1 : 0) << ',' << to_string(p) << ','
          << num(c.phase_cycles[slot]) << ',' << num(e.mac) << ',' << num(e.rf) << ',' << num(e.glb) << ','
          << num(e.dram) << ',' << num(e.total()) << '\n';
    }
  };
  rows("dense", s.dense);
  rows("ideal", s.ideal);
  for (const auto& r : s.runs) rows("sparse", r);
  return out.str();
}

std::string cost_csv(const SimulationSummary& s) {
  NetworkCost all;
  for (const auto& r : s.runs) all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
  std::ostringstream out;
  out.precision(17);
  write_cost_csv(out, all);
  return out.str();
}

}  // namespace sta
