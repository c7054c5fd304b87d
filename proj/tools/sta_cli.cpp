// sta: command-line front end for training, balancing reports, cost-model
// runs and CSB file utilities.
//
// Exit codes: 0 success, 2 configuration or input error, 3 runtime or model
// error.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sta/balance.hpp"
#include "sta/costmodel.hpp"
#include "sta/csb.hpp"
#include "sta/error.hpp"
#include "sta/refnet.hpp"
#include "sta/run.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sta;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::string workspace = ".";
  std::string config_file;
  std::string out = "out";
};

fs::path under(const Globals& g, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(g.workspace) / path;
}

// Config file values replace flag values; relative paths then resolve
// against the workspace root.
RunConfig finish(const Globals& g, RunConfig c) {
  if (!g.config_file.empty()) c.apply_json(read_file(under(g, g.config_file)));
  bool preset = false;
  for (const auto& name : preset_names()) preset = preset || c.network == name;
  if (!preset) c.network = under(g, c.network).string();
  if (!c.energy.empty()) c.energy = under(g, c.energy).string();
  if (!c.masks.empty()) c.masks = under(g, c.masks).string();
  return c;
}

void add_network_flags(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--network,--preset", c.network, "preset name (toy, toy-small, wide) or network file");
  cmd->add_option("--batch", c.batch, "minibatch size (0 keeps the network's own)");
}

void add_model_flags(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--array", c.array, "PE array, e.g. 16x16 or 32x32");
  cmd->add_option("--energy", c.energy, "energy table JSON (mac, rf, glb, dram in pJ)");
  cmd->add_option("--masks", c.masks, "directory written by 'sta train'");
}

int cmd_train(const Globals& g, const RunConfig& flags) {
  const RunConfig c = finish(g, flags);
  const TrainingConfig tc = c.training_config();
  const fs::path dir = under(g, g.out);
  const TrainingResult result = run_training(tc, [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %lld  loss %.4f  train %.4f  val %.4f  density %.4f\n",
                 static_cast<long long>(e.epoch), e.train_loss, e.train_accuracy, e.val_accuracy, e.density);
  });
  const auto files = save_training(dir, tc.network, result);
  write_manifest(dir, "train", c, files);
  std::printf("final validation accuracy %.4f, density %.4f -> %s\n", result.final_val_accuracy(),
              result.epochs.empty() ? 1.0 : result.epochs.back().density, dir.string().c_str());
  return 0;
}

std::vector<LayerSparsity> sparsity_for(const RunConfig& c, const Network& net) {
  return c.masks.empty() ? synthetic_sparsity(net, c) : load_sparsity(c.masks, net);
}

int cmd_simulate(const Globals& g, const RunConfig& flags) {
  const RunConfig c = finish(g, flags);
  const Network net = c.resolve_network();
  const ArrayConfig array = c.resolve_array();
  const EnergyTable energy = c.resolve_energy();
  const auto schemes = c.resolve_mappings();
  const auto sparsity = sparsity_for(c, net);
  const fs::path dir = under(g, g.out);
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file_atomic(dir / name, text);
    files.push_back(name);
  };

  const SimulationSummary s = simulate(net, sparsity, schemes, c.balanced, energy, array);
  put("summary.csv", summary_csv(s));
  put("phases.csv", phase_csv(s));
  put("layers.csv", cost_csv(s));
  put("energy_table.json", energy.to_json() + "\n");

  if (!c.scale_to.empty()) {
    const ArrayConfig big = ArrayConfig::parse(c.scale_to);
    std::ostringstream out;
    out.precision(10);
    out << "mapping,layer,phase,cycles_" << c.array << ",cycles_" << c.scale_to << ",speedup\n";
    for (Scheme scheme : schemes) {
      Schedule schedule;
      schedule.uniform = scheme;
      schedule.balanced = c.balanced;
      const NetworkCost a = network_cost(net, schedule, sparsity, energy, array);
      const NetworkCost b = network_cost(net, schedule, sparsity, energy, big);
      for (std::size_t i = 0; i < a.rows.size(); ++i)
        out << '"' << to_string(scheme) << "\"," << a.rows[i].layer << ',' << to_string(a.rows[i].cost.phase) << ','
            << a.rows[i].cost.cycles << ',' << b.rows[i].cost.cycles << ','
            << a.rows[i].cost.cycles / b.rows[i].cost.cycles << '\n';
      out << '"' << to_string(scheme) << "\",total,all," << a.cycles() << ',' << b.cycles() << ','
          << a.cycles() / b.cycles() << '\n';
    }
    put("scaling.csv", out.str());
  }
  write_manifest(dir, "simulate", c, files);
  std::cout << summary_csv(s);
  return 0;
}

int cmd_balance_report(const Globals& g, const RunConfig& flags) {
  const RunConfig c = finish(g, flags);
  if (c.masks.empty()) throw ConfigError("balance-report needs --masks");
  const Network net = c.resolve_network();
  const auto sparsity = load_sparsity(c.masks, net);
  const auto schemes = c.resolve_mappings();
  if (schemes.size() != 1) throw ConfigError("balance-report takes exactly one mapping");
  const ArrayConfig array = c.resolve_array();
  const WaveOverheads w = wave_overheads(net, sparsity, schemes.front(), parse_phase(c.phase), array);
  const fs::path dir = under(g, g.out);

  const Histogram before = make_histogram(w.unbalanced);
  const Histogram after = make_histogram(w.balanced);
  std::ostringstream hb, ha, waves;
  before.write_csv(hb);
  after.write_csv(ha);
  waves.precision(10);
  waves << "layer,wave,overhead_unbalanced,overhead_balanced\n";
  std::string last;
  std::int64_t index = 0;
  for (std::size_t i = 0; i < w.layer.size(); ++i) {
    if (w.layer[i] != last) index = 0, last = w.layer[i];
    waves << w.layer[i] << ',' << index++ << ',' << w.unbalanced[i] << ',' << w.balanced[i] << '\n';
  }
  write_file_atomic(dir / "histogram_unbalanced.csv", hb.str());
  write_file_atomic(dir / "histogram_balanced.csv", ha.str());
  write_file_atomic(dir / "waves.csv", waves.str());
  write_manifest(dir, "balance-report", c, {"histogram_unbalanced.csv", "histogram_balanced.csv", "waves.csv"});
  std::printf("waves %zu  worst overhead %.3f -> %.3f  below 0.10: %.3f -> %.3f\n", w.layer.size(), before.max_value,
              after.max_value, before.fraction_below(0.10), after.fraction_below(0.10));
  return 0;
}

BlockShape parse_block(const std::string& text) {
  unsigned r = 0, s = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> r >> x >> s) || (x != 'x' && x != 'X') || r == 0 || s == 0 || r * s > kMaskBits)
    throw ConfigError("block shape must look like 3x3 with at most 64 positions");
  return {r, s};
}

Shape parse_shape(const std::string& text) {
  Shape out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("bad shape '" + text + "'");
    }
    if (out.back() < 1) throw ConfigError("shape extents must be positive");
  }
  if (out.size() < 2) throw ConfigError("a CSB tensor needs at least two dimensions");
  return out;
}

int cmd_csb_encode(const Globals& g, const std::string& input, const std::string& output, const std::string& shape,
                   const std::string& block) {
  const Shape dims = parse_shape(shape);
  const std::string raw = read_file(under(g, input));
  const auto count = static_cast<std::size_t>(shape_volume(dims));
  if (raw.size() != count * sizeof(float))
    throw ConfigError("input holds " + std::to_string(raw.size()) + " bytes, shape needs " +
                      std::to_string(count * sizeof(float)));
  std::vector<float> values(count);
  std::memcpy(values.data(), raw.data(), raw.size());
  const CsbTensor t = CsbTensor::encode(Tensor(dims, std::move(values)), parse_block(block));
  std::ostringstream out(std::ios::binary);
  t.write(out);
  write_file_atomic(under(g, output), out.str());
  return 0;
}

int cmd_csb_decode(const Globals& g, const std::string& input, const std::string& output) {
  const Tensor t = CsbTensor::load(under(g, input)).decode();
  write_file_atomic(under(g, output),
                    std::string_view(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float)));
  return 0;
}

int cmd_csb_inspect(const Globals& g, const std::string& input) {
  const CsbTensor t = CsbTensor::load(under(g, input));
  t.validate();
  const json j{{"dense_shape", t.dense_shape()},
               {"block", {t.block_shape().rows, t.block_shape().cols}},
               {"grid", t.grid_shape()},
               {"blocks", t.block_count()},
               {"nnz", t.nnz()},
               {"density", t.density()},
               {"storage_bytes", t.storage_bytes()},
               {"metadata_bytes", t.metadata_bytes()},
               {"dense_bytes", t.dense_bytes()}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse training accelerator model"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--workspace", g.workspace, "root for every relative path");
  app.add_option("--config", g.config_file, "JSON run config; its values override flags");

  RunConfig train, sim, bal;
  auto* t = app.add_subcommand("train", "train the reference network with sparse updates");
  add_network_flags(t, train);
  t->add_option("--sparsity", train.sparsity, "weight sparsity factor (1 = dense)");
  t->add_option("--lambda", train.lambda, "initial-weight decay factor per iteration");
  t->add_option("--cutoff", train.cutoff, "iteration after which initial weights are zero");
  t->add_flag("!--no-decay", train.decay, "keep initial weights undecayed");
  t->add_option("--seed", train.seed, "weight seed");
  t->add_option("--data-seed", train.data_seed, "dataset seed");
  t->add_option("--epochs", train.epochs, "passes over the training set");
  t->add_option("--train-samples", train.train_samples, "synthetic training set size");
  t->add_option("--val-samples", train.val_samples, "synthetic validation set size");
  t->add_option("--eta", train.eta, "learning rate");
  t->add_option("--snapshot-every", train.snapshot_every, "mask snapshot period in iterations (0: final only)");
  t->add_flag("--oracle", train.oracle, "compare every step with sort-based selection");
  t->add_option("--out", g.out, "output directory");

  auto* s = app.add_subcommand("simulate", "cost the network on the accelerator model");
  add_network_flags(s, sim);
  add_model_flags(s, sim);
  s->add_option("--mappings", sim.mappings, "all, or a comma-separated list of ck, kn, cn, pq");
  s->add_flag("!--unbalanced", sim.balanced, "disable half-tile balancing");
  s->add_option("--sparsity", sim.sparsity, "sparsity factor for synthetic masks");
  s->add_option("--synthetic", sim.synthetic, "synthetic masks without --masks: uniform, random or dense");
  s->add_option("--act-density", sim.act_density, "input activation density for synthetic runs");
  s->add_option("--seed", sim.seed, "seed for random synthetic masks");
  s->add_option("--scale-to", sim.scale_to, "second array for a scaling report, e.g. 32x32");
  s->add_option("--out", g.out, "output directory");

  auto* b = app.add_subcommand("balance-report", "per-wave load imbalance before and after balancing");
  add_network_flags(b, bal);
  add_model_flags(b, bal);
  b->add_option("--mapping", bal.mappings, "mapping to report (default kn)");
  b->add_option("--phase", bal.phase, "fw, bw or wu");
  b->add_option("--out", g.out, "output directory");

  auto* c = app.add_subcommand("csb", "encode, decode or inspect CSB files");
  c->require_subcommand(1);
  std::string in, outp, shape, block = "3x3";
  auto* ce = c->add_subcommand("encode", "raw little-endian float32 -> CSB");
  ce->add_option("--input", in)->required();
  ce->add_option("--output", outp)->required();
  ce->add_option("--shape", shape, "dense shape, e.g. 64,32,3,3")->required();
  ce->add_option("--block", block, "block shape over the last two dimensions");
  auto* cd = c->add_subcommand("decode", "CSB -> raw little-endian float32");
  cd->add_option("--input", in)->required();
  cd->add_option("--output", outp)->required();
  auto* ci = c->add_subcommand("inspect", "print a JSON summary");
  ci->add_option("--input", in)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*t) return cmd_train(g, train);
    if (*s) return cmd_simulate(g, sim);
    if (*b) return cmd_balance_report(g, bal);
    if (*ce) return cmd_csb_encode(g, in, outp, shape, block);
    if (*cd) return cmd_csb_decode(g, in, outp);
    if (*ci) return cmd_csb_inspect(g, in);
  } catch (const ConfigError& e) {
    std::cerr << "sta: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "sta: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "sta: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "sta: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
