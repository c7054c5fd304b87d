#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "sta/balance.hpp"
#include "sta/costmodel.hpp"
#include "sta/csb.hpp"
#include "sta/error.hpp"
#include "sta/quantile.hpp"
#include "sta/refnet.hpp"
#include "sta/run.hpp"
#include "sta/sparsetrain.hpp"
#include "sta/workload.hpp"

namespace py = pybind11;
using namespace sta;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<float> data(static_cast<std::size_t>(a.size()));
  if (!data.empty()) std::memcpy(data.data(), a.data(), data.size() * sizeof(float));
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> to_array(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  if (t.size() != 0) std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(float));
  return out;
}

py::dict breakdown(const EnergyBreakdown& e) {
  py::dict d;
  d["mac"] = e.mac;
  d["rf"] = e.rf;
  d["glb"] = e.glb;
  d["dram"] = e.dram;
  d["total"] = e.total();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse training and accelerator cost model";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::enum_<Phase>(m, "Phase")
      .value("Forward", Phase::Forward)
      .value("Backward", Phase::Backward)
      .value("WeightUpdate", Phase::WeightUpdate);
  py::enum_<Scheme>(m, "Scheme").value("CK", Scheme::CK).value("KN", Scheme::KN).value("CN", Scheme::CN).value("PQ", Scheme::PQ);

  py::class_<LayerShape>(m, "LayerShape")
      .def_readonly("name", &LayerShape::name)
      .def_property_readonly("kind", [](const LayerShape& l) { return std::string(to_string(l.kind)); })
      .def_readonly("N", &LayerShape::N)
      .def_readonly("C", &LayerShape::C)
      .def_readonly("K", &LayerShape::K)
      .def_readonly("R", &LayerShape::R)
      .def_readonly("S", &LayerShape::S)
      .def_readonly("P", &LayerShape::P)
      .def_readonly("Q", &LayerShape::Q)
      .def_readonly("stride", &LayerShape::stride)
      .def_readonly("pad", &LayerShape::pad)
      .def("weight_count", &LayerShape::weight_count)
      .def("__repr__", [](const LayerShape& l) { return "<LayerShape " + l.name + ">"; });

  py::class_<Network>(m, "Network")
      .def_readonly("name", &Network::name)
      .def_readonly("layers", &Network::layers)
      .def("total_weights", &Network::total_weights)
      .def("to_json", [](const Network& n) { return network_to_json(n); });
  m.def("preset_network", &preset_network, py::arg("name"), py::arg("batch") = 0);
  m.def("parse_network", &parse_network, py::arg("json_text"));
  m.def("preset_names", &preset_names);
  m.def("dense_macs", &dense_macs, py::arg("layer"), py::arg("phase"));

  py::class_<CsbTensor>(m, "CsbTensor")
      .def_static(
          "encode",
          [](const FloatArray& a, std::uint32_t rows, std::uint32_t cols) {
            return CsbTensor::encode(to_tensor(a), BlockShape{rows, cols});
          },
          py::arg("dense"), py::arg("block_rows"), py::arg("block_cols"))
      .def("decode", [](const CsbTensor& t) { return to_array(t.decode()); })
      .def_static("load", [](const std::string& p) { return CsbTensor::load(p); })
      .def("save", [](const CsbTensor& t, const std::string& p) { t.save(p); })
      .def_property_readonly("dense_shape", &CsbTensor::dense_shape)
      .def_property_readonly("block_shape",
                             [](const CsbTensor& t) { return py::make_tuple(t.block_shape().rows, t.block_shape().cols); })
      .def_property_readonly("nnz", &CsbTensor::nnz)
      .def_property_readonly("block_count", &CsbTensor::block_count)
      .def("density", &CsbTensor::density)
      .def("storage_bytes", &CsbTensor::storage_bytes)
      .def("block_nnz", py::overload_cast<std::size_t>(&CsbTensor::block_nnz, py::const_))
      .def("__eq__", [](const CsbTensor& a, const CsbTensor& b) { return a == b; });

  py::class_<QuantileEstimator>(m, "QuantileEstimator")
      .def(py::init<double, double, double>(), py::arg("q"), py::arg("rate") = QuantileEstimator::kRate,
           py::arg("initial") = QuantileEstimator::kInitialEstimate)
      .def_static("for_density", &QuantileEstimator::for_density)
      .def("update", &QuantileEstimator::update)
      .def(
          "update_many",
          [](QuantileEstimator& q, py::array_t<double, py::array::c_style | py::array::forcecast> values) {
            const double* v = values.data();
            for (py::ssize_t i = 0; i < values.size(); ++i) q.update(v[i]);
          },
          "Scalar updates over a 1-D array, in order.")
      .def_property_readonly("threshold", &QuantileEstimator::threshold)
      .def_property_readonly("updates", &QuantileEstimator::updates);

  py::class_<WeightRecompute>(m, "WeightRecompute")
      .def(py::init<std::uint64_t, std::int64_t, float, float, std::int64_t>(), py::arg("seed"), py::arg("size"),
           py::arg("scale"), py::arg("lambda_") = 0.9f, py::arg("cutoff") = 1000)
      .def("value", &WeightRecompute::value, py::arg("index"), py::arg("t"))
      .def("fill", [](const WeightRecompute& w, std::int64_t t) {
        py::array_t<float> out(w.size());
        w.fill(t, std::span<float>(out.mutable_data(), static_cast<std::size_t>(w.size())));
        return out;
      });

  m.def(
      "balance_overhead",
      [](const std::vector<std::vector<double>>& tiles, bool balanced) {
        Wave w;
        for (std::size_t i = 0; i < tiles.size(); ++i)
          w.tiles.push_back(WorkTile::single(static_cast<std::int64_t>(i), tiles[i]));
        return wave_overhead(w, balanced);
      },
      py::arg("tiles"), py::arg("balanced"),
      "Max-over-mean overhead of one wave whose tiles list per-unit work.");

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("network", &RunConfig::network)
      .def_readwrite("sparsity", &RunConfig::sparsity)
      .def_readwrite("decay", &RunConfig::decay)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("train_samples", &RunConfig::train_samples)
      .def_readwrite("val_samples", &RunConfig::val_samples)
      .def_readwrite("array", &RunConfig::array)
      .def_readwrite("mappings", &RunConfig::mappings)
      .def_readwrite("balanced", &RunConfig::balanced)
      .def_readwrite("synthetic", &RunConfig::synthetic)
      .def_readwrite("act_density", &RunConfig::act_density)
      .def("apply_json", &RunConfig::apply_json)
      .def("canonical", &RunConfig::canonical)
      .def("hash", &RunConfig::hash);

  m.def(
      "simulate",
      [](const RunConfig& c) {
        const Network net = c.resolve_network();
        const auto sparsity = c.masks.empty() ? synthetic_sparsity(net, c) : load_sparsity(c.masks, net);
        const auto schemes = c.resolve_mappings();
        const SimulationSummary s = simulate(net, sparsity, schemes, c.balanced, c.resolve_energy(), c.resolve_array());
        py::dict out;
        out["dense_cycles"] = s.dense.cycles();
        out["dense_energy"] = breakdown(s.dense.energy());
        out["ideal_cycles"] = s.ideal.cycles();
        py::list runs;
        for (std::size_t i = 0; i < s.runs.size(); ++i) {
          py::dict r;
          r["mapping"] = std::string(to_string(schemes[i]));
          r["cycles"] = s.runs[i].cycles();
          r["energy"] = breakdown(s.runs[i].energy());
          runs.append(r);
        }
        out["runs"] = runs;
        out["summary_csv"] = summary_csv(s);
        return out;
      },
      py::arg("config"), "Cost the configured network; returns totals per mapping.");

  m.def(
      "train",
      [](const RunConfig& c, const std::string& out_dir) {
        const TrainingConfig tc = c.training_config();
        TrainingResult result;
        {
          py::gil_scoped_release release;
          result = run_training(tc);
        }
        if (!out_dir.empty()) write_manifest(out_dir, "train", c, save_training(out_dir, tc.network, result));
        py::dict d;
        py::list acc, dens;
        for (const auto& e : result.epochs) {
          acc.append(e.val_accuracy);
          dens.append(e.density);
        }
        d["val_accuracy"] = acc;
        d["density"] = dens;
        d["activation_density"] = result.activation_density;
        d["epochs_csv"] = epochs_csv(result);
        return d;
      },
      py::arg("config"), py::arg("out_dir") = std::string{}, "Train and optionally write the artifact directory.");
}
