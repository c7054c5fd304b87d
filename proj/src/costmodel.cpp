#include "sta/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sta/balance.hpp"
#include "sta/dataset.hpp"
#include "sta/error.hpp"

namespace sta {

std::string_view to_string(Dim d) {
  switch (d) {
    case Dim::N: return "N";
    case Dim::C: return "C";
    case Dim::K: return "K";
    case Dim::P: return "P";
    case Dim::Q: return "Q";
  }
  return "?";
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::H: return "H";
    case Role::V: return "V";
    case Role::U: return "U";
    case Role::B: return "B";
  }
  return "?";
}

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::CK: return "C,K";
    case Scheme::KN: return "K,N";
    case Scheme::CN: return "C,N";
    case Scheme::PQ: return "P,Q";
  }
  return "?";
}

Scheme parse_scheme(std::string_view text) {
  std::string t;
  for (char c : text)
    if (c != ',' && c != ' ') t += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (t == "CK") return Scheme::CK;
  if (t == "KN") return Scheme::KN;
  if (t == "CN") return Scheme::CN;
  if (t == "PQ") return Scheme::PQ;
  throw ConfigError("unknown mapping '" + std::string(text) + "' (expected CK, KN, CN or PQ)");
}

// ---------------------------------------------------------------------------
// Configuration

void ArrayConfig::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("PE array extents must be positive");
  if (rf_bytes < 16 || glb_bytes < rf_bytes) throw ConfigError("buffer sizes must satisfy 16 <= RF <= GLB");
  if (wave_cycles < 0.0 || ck_penalty < 0.0) throw ConfigError("latency overheads must be non-negative");
}

ArrayConfig ArrayConfig::grid(std::int64_t r, std::int64_t c) {
  ArrayConfig a;
  a.rows = r;
  a.cols = c;
  // The global buffer doubles for every fourfold growth of the array.
  const double scale = std::sqrt(static_cast<double>(r * c) / 256.0);
  a.glb_bytes = std::max<std::int64_t>(a.rf_bytes, static_cast<std::int64_t>(std::llround(128.0 * 1024.0 * scale)));
  a.validate();
  return a;
}

ArrayConfig ArrayConfig::parse(std::string_view text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos) throw ConfigError("array size must look like 16x16");
  try {
    const auto r = std::stoll(std::string(text.substr(0, x)));
    const auto c = std::stoll(std::string(text.substr(x + 1)));
    return grid(r, c);
  } catch (const std::logic_error&) {
    throw ConfigError("array size must look like 16x16, got '" + std::string(text) + "'");
  }
}

void EnergyTable::validate() const {
  if (!(mac > 0.0 && rf > 0.0 && glb > rf && dram > glb))
    throw ConfigError("energy table must satisfy dram > glb > rf > 0 and mac > 0");
}

EnergyTable EnergyTable::parse(std::string_view json_text) {
  EnergyTable e;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw ConfigError("energy table must be a JSON object");
    for (const auto& item : j.items())
      if (item.key() != "mac" && item.key() != "rf" && item.key() != "glb" && item.key() != "dram")
        throw ConfigError("unknown energy table key '" + item.key() + "'");
    e.mac = j.value("mac", e.mac);
    e.rf = j.value("rf", e.rf);
    e.glb = j.value("glb", e.glb);
    e.dram = j.value("dram", e.dram);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad energy table: ") + ex.what());
  }
  e.validate();
  return e;
}

EnergyTable EnergyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open energy table '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string EnergyTable::to_json() const {
  return nlohmann::json{{"mac", mac}, {"rf", rf}, {"glb", glb}, {"dram", dram}}.dump(2);
}

EnergyBreakdown& EnergyBreakdown::operator+=(const EnergyBreakdown& o) {
  mac += o.mac, rf += o.rf, glb += o.glb, dram += o.dram;
  return *this;
}

AccessCounts& AccessCounts::operator+=(const AccessCounts& o) {
  macs += o.macs, rf += o.rf, glb += o.glb, dram_words += o.dram_words;
  return *this;
}

double compressed_words(double nnz, double positions) {
  return nnz + std::ceil(positions / 32.0) + std::ceil(positions / 64.0);
}

namespace {

constexpr std::size_t at(Dim d) { return static_cast<std::size_t>(d); }

struct Range {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t size() const { return hi - lo; }
  bool operator<(const Range& o) const { return lo != o.lo ? lo < o.lo : hi < o.hi; }
};
using Region = std::array<Range, 5>;

std::int64_t extent(const LayerShape& l, Dim d) {
  switch (d) {
    case Dim::N: return l.N;
    case Dim::C: return l.C;
    case Dim::K: return l.K;
    case Dim::P: return l.kind == LayerKind::Fc ? 1 : l.P;
    case Dim::Q: return l.kind == LayerKind::Fc ? 1 : l.Q;
  }
  return 1;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

bool depends(Tensor3 t, Dim d) {
  switch (t) {
    case Tensor3::Weight: return d == Dim::K || d == Dim::C;
    case Tensor3::Input: return d != Dim::K;
    case Tensor3::Output: return d != Dim::C;
  }
  return false;
}

struct Conv {
  std::int64_t R, S, H, W, stride, pad;
  explicit Conv(const LayerShape& l) {
    const bool fc = l.kind == LayerKind::Fc;
    R = fc ? 1 : l.R;
    S = fc ? 1 : l.S;
    H = fc ? 1 : l.in_height();
    W = fc ? 1 : l.in_width();
    stride = fc ? 1 : l.stride;
    pad = fc ? 0 : l.pad;
  }
  // Input rows touched by output rows [lo, hi) through a kernel of height k.
  static Range footprint(Range out, std::int64_t k, std::int64_t stride, std::int64_t pad, std::int64_t extent) {
    if (out.size() <= 0) return {0, 0};
    const std::int64_t lo = std::max<std::int64_t>(0, out.lo * stride - pad);
    const std::int64_t hi = std::min<std::int64_t>(extent, (out.hi - 1) * stride + k - pad);
    return {lo, std::max(lo, hi)};
  }
  std::int64_t footprint_size(std::int64_t out_rows, std::int64_t k, std::int64_t extent) const {
    return std::min<std::int64_t>(extent, (out_rows - 1) * stride + k);
  }
};

// Work (MACs) and delivered words of any region of a layer's loop space for
// one phase.
class WorkModel {
 public:
  WorkModel(const LayerShape& layer, Phase phase, const LayerSparsity& sp) : l_(layer), phase_(phase), g_(layer) {
    K_ = layer.K, C_ = layer.C, N_ = layer.N, P_ = extent(layer, Dim::P), Q_ = extent(layer, Dim::Q);
    build_valid(vp_, g_.R, P_, g_.H);
    build_valid(vq_, g_.S, Q_, g_.W);
    if (sp.weights) load_weights(*sp.weights);
    if (sp.activations) {
      load_activations(*sp.activations);
    } else {
      if (sp.activation_density < 0.0 || sp.activation_density > 1.0)
        throw ConfigError("activation density must lie in [0, 1]");
      act_density_ = sp.activation_density;
    }
  }

  double load(const Region& r) const {
    const double n = static_cast<double>(r[at(Dim::N)].size());
    const double k = static_cast<double>(r[at(Dim::K)].size());
    const Range kr = r[at(Dim::K)], cr = r[at(Dim::C)], pr = r[at(Dim::P)], qr = r[at(Dim::Q)];
    if (n == 0 || k == 0 || cr.size() == 0 || pr.size() == 0 || qr.size() == 0) return 0.0;
    switch (phase_) {
      case Phase::Forward:
        return n * static_cast<double>(pr.size() * qr.size()) * weight_nnz(kr, cr);
      case Phase::Backward: {
        double sum = 0.0;
        for (std::int64_t a = 0; a < g_.R; ++a) {
          const double va = valid(vp_, a, pr);
          if (va == 0.0) continue;
          for (std::int64_t b = 0; b < g_.S; ++b) sum += position_count(a * g_.S + b, kr, cr) * va * valid(vq_, b, qr);
        }
        return n * sum;
      }
      case Phase::WeightUpdate: {
        if (act_.empty()) {
          double rows = 0.0, cols = 0.0;
          for (std::int64_t a = 0; a < g_.R; ++a) rows += valid(vp_, a, pr);
          for (std::int64_t b = 0; b < g_.S; ++b) cols += valid(vq_, b, qr);
          return act_density_ * n * k * static_cast<double>(cr.size()) * rows * cols;
        }
        double sum = 0.0;
        const Range nr = r[at(Dim::N)];
        for (std::int64_t i = nr.lo; i < nr.hi; ++i)
          for (std::int64_t c = cr.lo; c < cr.hi; ++c) sum += plane_sum(act_work_, i, c, P_, Q_, pr, qr);
        return k * sum;
      }
    }
    return 0.0;
  }

  double words(Tensor3 t, const Region& r) const {
    const Range kr = r[at(Dim::K)], cr = r[at(Dim::C)], nr = r[at(Dim::N)];
    switch (t) {
      case Tensor3::Weight: {
        const double positions = static_cast<double>(kr.size() * cr.size() * g_.R * g_.S);
        if (phase_ != Phase::WeightUpdate && !wprefix_.empty()) return compressed_words(weight_nnz(kr, cr), positions);
        return positions;
      }
      case Tensor3::Input: {
        const Range hr = Conv::footprint(r[at(Dim::P)], g_.R, g_.stride, g_.pad, g_.H);
        const Range wr = Conv::footprint(r[at(Dim::Q)], g_.S, g_.stride, g_.pad, g_.W);
        const double positions = static_cast<double>(nr.size() * cr.size() * hr.size() * wr.size());
        if (phase_ != Phase::WeightUpdate) return positions;
        if (act_.empty()) return act_density_ >= 1.0 ? positions : compressed_words(act_density_ * positions, positions);
        double nnz = 0.0;
        for (std::int64_t i = nr.lo; i < nr.hi; ++i)
          for (std::int64_t c = cr.lo; c < cr.hi; ++c) nnz += plane_sum(act_nz_, i, c, g_.H, g_.W, hr, wr);
        return compressed_words(nnz, positions);
      }
      case Tensor3::Output:
        return static_cast<double>(nr.size() * kr.size() * r[at(Dim::P)].size() * r[at(Dim::Q)].size());
    }
    return 0.0;
  }

  static Region everything(const LayerShape& l) {
    Region r;
    for (Dim d : kAllDims) r[at(d)] = {0, extent(l, d)};
    return r;
  }
  Region full() const { return everything(l_); }

  double dram_words() const {
    const Region r = full();
    return words(Tensor3::Weight, r) + words(Tensor3::Input, r) + words(Tensor3::Output, r);
  }

 private:
  const LayerShape& l_;
  Phase phase_;
  Conv g_;
  std::int64_t K_, C_, N_, P_, Q_;
  std::vector<std::vector<double>> vp_, vq_;  // [r][p + 1] prefix of valid output rows
  std::vector<double> wprefix_;               // (K+1) x (C+1) prefix of kernel nnz
  std::vector<std::vector<double>> posprefix_;  // per kernel position, (K+1) x (C+1)
  std::vector<double> act_work_;  // per (n, c): (P+1) x (Q+1) prefix of non-zero MAC terms
  std::vector<double> act_nz_;    // per (n, c): (H+1) x (W+1) prefix of non-zero inputs
  std::vector<float> act_;
  double act_density_ = 1.0;

  void build_valid(std::vector<std::vector<double>>& v, std::int64_t k, std::int64_t out, std::int64_t in) const {
    v.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(out + 1), 0.0));
    for (std::int64_t a = 0; a < k; ++a)
      for (std::int64_t p = 0; p < out; ++p) {
        const std::int64_t h = p * g_.stride + a - g_.pad;
        v[a][p + 1] = v[a][p] + ((h >= 0 && h < in) ? 1.0 : 0.0);
      }
  }

  static double valid(const std::vector<std::vector<double>>& v, std::int64_t a, Range r) {
    return v[static_cast<std::size_t>(a)][static_cast<std::size_t>(r.hi)] - v[static_cast<std::size_t>(a)][static_cast<std::size_t>(r.lo)];
  }

  double rect(const std::vector<double>& pre, Range kr, Range cr) const {
    const auto w = C_ + 1;
    auto v = [&](std::int64_t k, std::int64_t c) { return pre[static_cast<std::size_t>(k * w + c)]; };
    return v(kr.hi, cr.hi) - v(kr.lo, cr.hi) - v(kr.hi, cr.lo) + v(kr.lo, cr.lo);
  }

  double weight_nnz(Range kr, Range cr) const {
    if (wprefix_.empty()) return static_cast<double>(kr.size() * cr.size() * g_.R * g_.S);
    return rect(wprefix_, kr, cr);
  }

  double position_count(std::int64_t pos, Range kr, Range cr) const {
    if (posprefix_.empty()) return static_cast<double>(kr.size() * cr.size());
    return rect(posprefix_[static_cast<std::size_t>(pos)], kr, cr);
  }

  // Sum over a rectangle of one (n, c) plane of a stacked 2-D prefix table.
  double plane_sum(const std::vector<double>& pre, std::int64_t n, std::int64_t c, std::int64_t rows, std::int64_t cols,
                   Range rr, Range cc) const {
    const auto stride = (rows + 1) * (cols + 1);
    const double* base = pre.data() + (n * C_ + c) * stride;
    auto v = [&](std::int64_t a, std::int64_t b) { return base[a * (cols + 1) + b]; };
    return v(rr.hi, cc.hi) - v(rr.lo, cc.hi) - v(rr.hi, cc.lo) + v(rr.lo, cc.lo);
  }

  void load_weights(const CsbTensor& w) {
    const bool fc = l_.kind == LayerKind::Fc;
    const Shape expect = fc ? Shape{K_, C_} : Shape{K_, C_, l_.R, l_.S};
    if (w.dense_shape() != expect) throw ShapeError("weight mask of layer '" + l_.name + "' does not match its shape");
    const BlockShape want = fc ? BlockShape{1, 1} : BlockShape{static_cast<std::uint32_t>(l_.R), static_cast<std::uint32_t>(l_.S)};
    if (!(w.block_shape() == want)) throw ShapeError("weight mask of layer '" + l_.name + "' must be blocked per kernel");
    const auto w1 = C_ + 1;
    const auto positions = static_cast<std::size_t>(g_.R * g_.S);
    wprefix_.assign(static_cast<std::size_t>((K_ + 1) * w1), 0.0);
    posprefix_.assign(positions, std::vector<double>(wprefix_.size(), 0.0));
    const auto masks = w.masks();
    for (std::int64_t k = 0; k < K_; ++k)
      for (std::int64_t c = 0; c < C_; ++c) {
        const auto b = static_cast<std::size_t>(k * C_ + c);
        const auto i = static_cast<std::size_t>((k + 1) * w1 + c + 1);
        const auto up = static_cast<std::size_t>(k * w1 + c + 1);
        const auto left = static_cast<std::size_t>((k + 1) * w1 + c);
        const auto diag = static_cast<std::size_t>(k * w1 + c);
        wprefix_[i] = w.block_nnz(b) + wprefix_[up] + wprefix_[left] - wprefix_[diag];
        for (std::size_t p = 0; p < positions; ++p) {
          auto& pp = posprefix_[p];
          pp[i] = static_cast<double>((masks[b] >> p) & 1u) + pp[up] + pp[left] - pp[diag];
        }
      }
  }

  void load_activations(const CsbTensor& a) {
    const Shape expect{N_, C_, g_.H, g_.W};
    if (a.dense_shape() != expect)
      throw ShapeError("activation snapshot of layer '" + l_.name + "' does not match its input shape");
    const Tensor x = a.decode();
    act_ = x.storage();
    const auto hw1 = (g_.H + 1) * (g_.W + 1);
    const auto pq1 = (P_ + 1) * (Q_ + 1);
    act_nz_.assign(static_cast<std::size_t>(N_ * C_ * hw1), 0.0);
    act_work_.assign(static_cast<std::size_t>(N_ * C_ * pq1), 0.0);
    std::vector<double> nzs(static_cast<std::size_t>(g_.H * g_.W));
    for (std::int64_t n = 0; n < N_; ++n)
      for (std::int64_t c = 0; c < C_; ++c) {
        const float* plane = act_.data() + (n * C_ + c) * g_.H * g_.W;
        double* nz = act_nz_.data() + (n * C_ + c) * hw1;
        for (std::int64_t h = 0; h < g_.H; ++h)
          for (std::int64_t w = 0; w < g_.W; ++w) {
            const double v = plane[h * g_.W + w] != 0.0f ? 1.0 : 0.0;
            nz[(h + 1) * (g_.W + 1) + w + 1] = v + nz[h * (g_.W + 1) + w + 1] + nz[(h + 1) * (g_.W + 1) + w] - nz[h * (g_.W + 1) + w];
          }
        double* work = act_work_.data() + (n * C_ + c) * pq1;
        for (std::int64_t p = 0; p < P_; ++p)
          for (std::int64_t q = 0; q < Q_; ++q) {
            // Non-zero inputs under the kernel window of output (p, q).
            const Range hr = Conv::footprint({p, p + 1}, g_.R, g_.stride, g_.pad, g_.H);
            const Range wr = Conv::footprint({q, q + 1}, g_.S, g_.stride, g_.pad, g_.W);
            const double v = plane_sum(act_nz_, n, c, g_.H, g_.W, hr, wr);
            work[(p + 1) * (Q_ + 1) + q + 1] = v + work[p * (Q_ + 1) + q + 1] + work[(p + 1) * (Q_ + 1) + q] - work[p * (Q_ + 1) + q];
          }
      }
  }
};

std::int64_t rf_words_for(const LayerShape& l, const Conv& g, const std::array<std::int64_t, 5>& s) {
  const auto n = s[at(Dim::N)], c = s[at(Dim::C)], k = s[at(Dim::K)], p = s[at(Dim::P)], q = s[at(Dim::Q)];
  (void)l;
  return k * c * g.R * g.S + n * c * g.footprint_size(p, g.R, g.H) * g.footprint_size(q, g.S, g.W) + n * k * p * q;
}

Dim rows_dim(Scheme s) {
  switch (s) {
    case Scheme::CK: return Dim::C;
    case Scheme::KN: return Dim::K;
    case Scheme::CN: return Dim::C;
    case Scheme::PQ: return Dim::P;
  }
  return Dim::K;
}

Dim cols_dim(Scheme s) {
  switch (s) {
    case Scheme::CK: return Dim::K;
    case Scheme::KN: return Dim::N;
    case Scheme::CN: return Dim::N;
    case Scheme::PQ: return Dim::Q;
  }
  return Dim::N;
}

}  // namespace

Role Mapping::role(Tensor3 t) const {
  const bool r = depends(t, rows);
  const bool c = depends(t, cols);
  if (r && c) return Role::U;
  if (r) return Role::H;
  if (c) return Role::V;
  return Role::B;
}

namespace {

Tensor3 output_of(Phase p) {
  switch (p) {
    case Phase::Forward: return Tensor3::Output;
    case Phase::Backward: return Tensor3::Input;
    case Phase::WeightUpdate: return Tensor3::Weight;
  }
  return Tensor3::Output;
}

std::int64_t tensor_words(const Conv& g, Tensor3 t, const std::array<std::int64_t, 5>& s) {
  const auto n = s[at(Dim::N)], c = s[at(Dim::C)], k = s[at(Dim::K)], p = s[at(Dim::P)], q = s[at(Dim::Q)];
  switch (t) {
    case Tensor3::Weight: return k * c * g.R * g.S;
    case Tensor3::Input: return n * c * g.footprint_size(p, g.R, g.H) * g.footprint_size(q, g.S, g.W);
    case Tensor3::Output: return n * k * p * q;
  }
  return 0;
}

// Weighted dense fill traffic of one phase under one loop order: buffer
// words (array working set per delivery, plus partial-sum reads when an
// output piece returns) and register-file fills. A piece stays in place
// while only loops it does not depend on advance.
double phase_fill(const Conv& g, const Mapping& m, Phase phase, std::span<const Dim> order,
                  const std::array<std::int64_t, 5>& array_sizes, const std::array<std::int64_t, 5>& extents) {
  const EnergyTable e;
  const Tensor3 out = output_of(phase);
  double total = 0.0;
  for (Tensor3 t : {Tensor3::Weight, Tensor3::Input, Tensor3::Output}) {
    double deliveries = 1.0, outer = 1.0, distinct = 1.0;
    for (Dim d : order) {
      const auto passes = static_cast<double>(ceil_div(extents[at(d)], m.chunk(d)));
      outer *= passes;
      if (depends(t, d)) deliveries = outer, distinct *= passes;
    }
    const double pieces = static_cast<double>((depends(t, m.rows) ? m.row_groups : 1) *
                                              (depends(t, m.cols) ? m.col_groups : 1));
    const auto arr = static_cast<double>(tensor_words(g, t, array_sizes));
    total += deliveries * (e.glb * arr + e.rf * pieces * static_cast<double>(tensor_words(g, t, m.tile)));
    if (t == out) total += (deliveries - distinct) * e.glb * arr;
  }
  return total;
}

// Cheapest loop order of one phase; dimensions with a single pass go
// outermost since their position does not matter.
std::vector<Dim> best_order(const Conv& g, const Mapping& m, Phase phase, const std::array<std::int64_t, 5>& array_sizes,
                            const std::array<std::int64_t, 5>& extents, double* cost) {
  std::vector<Dim> fixed, moving;
  for (Dim d : {Dim::N, Dim::K, Dim::C, Dim::P, Dim::Q}) {
    const std::int64_t passes = ceil_div(extents[at(d)], m.chunk(d));
    if (m.is_spatial(d) && passes == 1) continue;
    (passes == 1 ? fixed : moving).push_back(d);
  }
  std::vector<Dim> best;
  double best_cost = 0.0;
  bool first = true;
  std::sort(moving.begin(), moving.end());
  do {
    std::vector<Dim> order = fixed;
    order.insert(order.end(), moving.begin(), moving.end());
    const double c = phase_fill(g, m, phase, order, array_sizes, extents);
    if (first || c < best_cost) best = std::move(order), best_cost = c;
    first = false;
  } while (std::next_permutation(moving.begin(), moving.end()));
  *cost = best_cost;
  return best;
}

std::vector<std::int64_t> chunk_options(std::int64_t extent) {
  std::vector<std::int64_t> out;
  for (std::int64_t parts = 1;; parts *= 2) {
    const std::int64_t c = ceil_div(extent, parts);
    if (out.empty() || c < out.back()) out.push_back(c);
    if (c == 1) break;
  }
  return out;
}

}  // namespace

Mapping make_mapping(const LayerShape& layer, const ArrayConfig& array, Scheme scheme) {
  layer.validate();
  array.validate();
  if (!layer.has_weights()) throw ConfigError("layer '" + layer.name + "' has no MACs to map");
  const Conv g(layer);
  Mapping base;
  base.scheme = scheme;
  base.rows = rows_dim(scheme);
  base.cols = cols_dim(scheme);
  std::array<std::int64_t, 5> extents{};
  for (Dim d : kAllDims) extents[at(d)] = extent(layer, d);
  const std::int64_t er = extents[at(base.rows)], ec = extents[at(base.cols)];
  const std::int64_t full_r = ceil_div(er, array.rows), full_c = ceil_div(ec, array.cols);
  base.row_groups = ceil_div(er, full_r);
  base.col_groups = ceil_div(ec, full_c);

  const std::int64_t rf_cap = array.rf_bytes / 4;
  const std::int64_t glb_cap = array.glb_bytes / 4;
  std::vector<Dim> temporal;
  for (Dim d : kAllDims)
    if (!base.is_spatial(d)) temporal.push_back(d);

  // Exhaustive search over power-of-two chunkings and loop orders, scored by
  // dense fill traffic: temporal chunks first, then spatial tiles (extra
  // array passes) only if nothing fits.
  std::vector<std::pair<Mapping, double>> feasible;
  const auto opt_r = chunk_options(full_r), opt_c = chunk_options(full_c);
  const auto opt0 = chunk_options(extents[at(temporal[0])]);
  const auto opt1 = chunk_options(extents[at(temporal[1])]);
  const auto opt2 = chunk_options(extents[at(temporal[2])]);
  for (std::size_t spatial_level = 0; spatial_level < opt_r.size() + opt_c.size() - 1 && feasible.empty(); ++spatial_level) {
    for (std::size_t ir = 0; ir < opt_r.size() && ir <= spatial_level; ++ir) {
      const std::size_t ic = spatial_level - ir;
      if (ic >= opt_c.size()) continue;
      for (auto c0 : opt0)
        for (auto c1 : opt1)
          for (auto c2 : opt2) {
            Mapping m = base;
            m.tile[at(m.rows)] = opt_r[ir];
            m.tile[at(m.cols)] = opt_c[ic];
            m.tile[at(temporal[0])] = c0;
            m.tile[at(temporal[1])] = c1;
            m.tile[at(temporal[2])] = c2;
            std::array<std::int64_t, 5> arr = m.tile;
            arr[at(m.rows)] = std::min(er, m.chunk(m.rows));
            arr[at(m.cols)] = std::min(ec, m.chunk(m.cols));
            const std::int64_t pe_words = rf_words_for(layer, g, m.tile);
            const std::int64_t arr_words = rf_words_for(layer, g, arr);
            if (pe_words > rf_cap || arr_words > glb_cap) continue;
            m.rf_words = pe_words;
            m.glb_words = arr_words;
            m.steps = 1;
            for (Dim d : kAllDims) m.steps *= ceil_div(extents[at(d)], m.chunk(d));
            double words = 0.0;
            for (Phase p : kAllPhases) {
              double c = 0.0;
              m.loop_order[static_cast<std::size_t>(p)] = best_order(g, m, p, arr, extents, &c);
              words += c;
            }
            feasible.emplace_back(std::move(m), words);
          }
    }
  }
  if (feasible.empty())
    throw InfeasibleError("layer '" + layer.name + "' has no tiling for mapping " + std::string(to_string(scheme)) +
                          " within a " + std::to_string(array.rf_bytes) + "-byte register file and " +
                          std::to_string(array.glb_bytes) + "-byte global buffer");
  // Among tilings whose traffic is within `slack` of the cheapest, take the
  // one with the fewest steps, then the most kernels per PE: larger per-PE
  // tiles even out sparse work better.
  double min_words = feasible.front().second;
  for (const auto& f : feasible) min_words = std::min(min_words, f.second);
  constexpr double slack = 0.25;
  auto kernels = [](const Mapping& m) { return m.tile[at(Dim::K)] * m.tile[at(Dim::C)]; };
  const std::pair<Mapping, double>* best = nullptr;
  for (const auto& f : feasible) {
    if (f.second > min_words * (1.0 + slack)) continue;
    if (!best || f.first.steps < best->first.steps ||
        (f.first.steps == best->first.steps && (kernels(f.first) > kernels(best->first) ||
                                                 (kernels(f.first) == kernels(best->first) && f.second < best->second))))
      best = &f;
  }
  Mapping out = best->first;
  out.low_utilization = 2 * out.pes_used() < array.pes();
  return out;
}

std::vector<Mapping> enumerate_mappings(const LayerShape& layer, const ArrayConfig& array) {
  std::vector<Mapping> out;
  std::string why;
  for (Scheme s : kAllSchemes) {
    try {
      out.push_back(make_mapping(layer, array, s));
    } catch (const InfeasibleError& e) {
      why = e.what();
    }
  }
  if (out.empty()) throw InfeasibleError(why);
  return out;
}

// ---------------------------------------------------------------------------
// Phase cost

namespace {

enum class BalanceMode { None, Line, CrossArray };

struct Item {
  std::int64_t orow, ocol;  // originating PE group
  std::int64_t drow, dcol;  // executing PE group
  int half;                 // -1: whole tile
  Range split;              // range of the split dimension
};

using PieceKey = std::array<std::int64_t, 12>;

}  // namespace

PhaseCost phase_cost(const LayerShape& layer, const Mapping& m, Phase phase, const LayerSparsity& sparsity,
                     bool balanced, const EnergyTable& energy, const ArrayConfig& array) {
  energy.validate();
  array.validate();
  const WorkModel wm(layer, phase, sparsity);

  PhaseCost cost;
  cost.phase = phase;
  cost.scheme = m.scheme;
  cost.dense_macs = static_cast<double>(dense_macs(layer, phase));

  BalanceMode mode = BalanceMode::None;
  std::optional<Dim> split;
  if (m.scheme == Scheme::KN) {
    split = phase == Phase::WeightUpdate ? Dim::N : Dim::K;
    mode = BalanceMode::Line;
  } else if (m.scheme == Scheme::CK) {
    split = Dim::K;
    mode = BalanceMode::CrossArray;
  }
  cost.balanced = balanced && mode != BalanceMode::None;
  const bool split_rows = split && *split == m.rows;

  auto chunk_range = [&](Dim d, std::int64_t i) {
    const std::int64_t t = m.chunk(d);
    return Range{i * t, std::min(extent(layer, d), (i + 1) * t)};
  };

  const Tensor3 out_tensor = output_of(phase);
  const std::array<Tensor3, 3> tensors{Tensor3::Weight, Tensor3::Input, Tensor3::Output};
  const std::vector<Dim>& order = m.loop_order[static_cast<std::size_t>(phase)];
  std::vector<std::int64_t> chunk_index(order.size(), 0);
  std::vector<std::set<PieceKey>> held(static_cast<std::size_t>(m.row_groups * m.col_groups));
  const std::int64_t gr_n = m.row_groups, gc_n = m.col_groups;

  // Temporal ranges of a wave (last loop dimension fastest).
  auto wave_base = [&](std::int64_t wave) {
    Region base = WorkModel::everything(layer);
    std::int64_t rest = wave;
    for (std::size_t i = order.size(); i-- > 0;) {
      const Dim d = order[i];
      const std::int64_t count = ceil_div(extent(layer, d), m.chunk(d));
      chunk_index[i] = rest % count;
      rest /= count;
      base[at(d)] = chunk_range(d, chunk_index[i]);
    }
    return base;
  };
  auto group_range = [&](const Region& base, Dim d, std::int64_t g) {
    const Range b = base[at(d)];
    const std::int64_t t = m.tile[at(d)];
    return Range{std::min(b.hi, b.lo + g * t), std::min(b.hi, b.lo + (g + 1) * t)};
  };
  auto region_of = [&](const Region& base, std::int64_t gr, std::int64_t gc) {
    Region r = base;
    r[at(m.rows)] = group_range(base, m.rows, gr);
    r[at(m.cols)] = group_range(base, m.cols, gc);
    return r;
  };

  // Work tiles along the split dimension.
  auto build_wave = [&](const Region& base) {
    Wave w;
    if (mode == BalanceMode::Line) {
      const std::int64_t lines = split_rows ? gr_n : gc_n;
      const std::int64_t lanes = split_rows ? gc_n : gr_n;
      for (std::int64_t g = 0; g < lines; ++g) {
        WorkTile t;
        t.index = g;
        const Range sr = group_range(base, *split, g);
        t.begin = sr.lo, t.end = sr.hi;
        for (std::int64_t lane = 0; lane < lanes; ++lane) {
          Region r = split_rows ? region_of(base, g, lane) : region_of(base, lane, g);
          std::vector<double> units;
          for (std::int64_t u = sr.lo; u < sr.hi; ++u) {
            r[at(*split)] = {u, u + 1};
            units.push_back(wm.load(r));
          }
          t.lanes.push_back(std::move(units));
        }
        w.tiles.push_back(std::move(t));
      }
    } else if (mode == BalanceMode::CrossArray) {
      for (std::int64_t gr = 0; gr < gr_n; ++gr)
        for (std::int64_t gc = 0; gc < gc_n; ++gc) {
          Region r = region_of(base, gr, gc);
          const Range sr = r[at(*split)];
          std::vector<double> units;
          for (std::int64_t u = sr.lo; u < sr.hi; ++u) {
            r[at(*split)] = {u, u + 1};
            units.push_back(wm.load(r));
          }
          w.tiles.push_back(WorkTile::single(gr * gc_n + gc, units, sr.lo));
        }
    } else {
      for (std::int64_t gr = 0; gr < gr_n; ++gr)
        for (std::int64_t gc = 0; gc < gc_n; ++gc) {
          const double load = wm.load(region_of(base, gr, gc));
          w.tiles.push_back(WorkTile::single(gr * gc_n + gc, std::span<const double>(&load, 1)));
        }
    }
    return w;
  };

  // Steps that differ only in reduction chunks form one synchronous wave:
  // partial sums stay in the PEs, so the array waits for its slowest PE
  // group only once the wave's outputs are complete. Work is summed over
  // the wave's steps before loads are compared and halves are paired.
  std::vector<std::int64_t> wave_of(static_cast<std::size_t>(m.steps));
  std::vector<Wave> waves;
  std::vector<std::vector<double>> wave_loads;
  {
    std::map<std::vector<std::int64_t>, std::int64_t> index;
    for (std::int64_t step = 0; step < m.steps; ++step) {
      const Region base = wave_base(step);
      std::vector<std::int64_t> key;
      for (std::size_t i = 0; i < order.size(); ++i)
        if (depends(out_tensor, order[i]) || (split && order[i] == *split)) key.push_back(chunk_index[i]);
      const auto [slot, fresh] = index.try_emplace(std::move(key), static_cast<std::int64_t>(waves.size()));
      wave_of[static_cast<std::size_t>(step)] = slot->second;
      Wave w = build_wave(base);
      auto loads = pe_loads(w, false);
      if (fresh) {
        waves.push_back(std::move(w));
        wave_loads.push_back(std::move(loads));
        continue;
      }
      Wave& sum = waves[static_cast<std::size_t>(slot->second)];
      auto& sum_loads = wave_loads[static_cast<std::size_t>(slot->second)];
      if (sum.tiles.size() != w.tiles.size() || sum_loads.size() != loads.size())
        throw std::logic_error("steps of one wave must share their tile structure");
      for (std::size_t t = 0; t < w.tiles.size(); ++t) {
        auto& into = sum.tiles[t].lanes;
        const auto& from = w.tiles[t].lanes;
        if (into.size() != from.size()) throw std::logic_error("steps of one wave must share their tile structure");
        for (std::size_t l = 0; l < from.size(); ++l) {
          if (into[l].size() != from[l].size()) throw std::logic_error("steps of one wave must share their tile structure");
          for (std::size_t u = 0; u < from[l].size(); ++u) into[l][u] += from[l][u];
        }
      }
      for (std::size_t p = 0; p < loads.size(); ++p) sum_loads[p] += loads[p];
    }
  }

  // A pairing is a list of (half, half) per PE group slot. The identity
  // pairing keeps both halves of every tile at home.
  using HalfId = std::pair<std::int64_t, int>;
  using Pairing = std::vector<std::pair<HalfId, HalfId>>;
  const double cross_factor = mode == BalanceMode::CrossArray ? 1.0 + array.ck_penalty : 1.0;
  std::vector<Pairing> pairings(waves.size());
  std::vector<std::map<HalfId, Range>> half_ranges(waves.size());
  cost.trace.assign(waves.size(), WaveTrace{});
  Pairing previous;
  for (std::size_t wi = 0; wi < waves.size(); ++wi) {
    const Wave& w = waves[wi];
    const auto& loads = wave_loads[wi];
    WaveTrace& trace = cost.trace[wi];
    const double unbalanced_max = loads.empty() ? 0.0 : *std::max_element(loads.begin(), loads.end());
    trace.mean_load = loads.empty() ? 0.0 : std::accumulate(loads.begin(), loads.end(), 0.0) / static_cast<double>(loads.size());
    trace.cycles = unbalanced_max;
    cost.counts.macs += std::accumulate(loads.begin(), loads.end(), 0.0);
    if (!cost.balanced) continue;
    std::map<HalfId, WorkTile> halves;
    Pairing identity;
    for (const auto& t : w.tiles) {
      auto [lo, hi] = split_half(t);
      identity.push_back({{lo.index, lo.half}, {hi.index, hi.half}});
      half_ranges[wi][{lo.index, lo.half}] = {lo.begin, lo.end};
      half_ranges[wi][{hi.index, hi.half}] = {hi.begin, hi.end};
      halves[{lo.index, lo.half}] = std::move(lo);
      halves[{hi.index, hi.half}] = std::move(hi);
    }
    auto max_of = [&](const Pairing& p) {
      double worst = 0.0;
      for (const auto& [x, y] : p) worst = std::max(worst, PairedTile{halves.at(x), halves.at(y)}.max_load());
      return p == identity ? worst : worst * cross_factor;
    };
    // Fresh pairing for this wave, kept only if it beats the identity.
    Pairing chosen = identity;
    double best = unbalanced_max;
    const BalancedWave bw = balance_wave(w);
    if (bw.rebalanced && bw.max_load * cross_factor < unbalanced_max) {
      chosen.clear();
      for (const auto& slot : bw.slots)
        chosen.push_back({{slot.first.index, slot.first.half}, {slot.second.index, slot.second.half}});
      best = bw.max_load * cross_factor;
    }
    // The previous wave's assignment leaves held data in place; keep it
    // whenever it is no slower.
    if (!previous.empty() && previous != chosen && previous.size() == identity.size()) {
      bool same_halves = true;
      for (const auto& [x, y] : previous) same_halves = same_halves && halves.count(x) && halves.count(y);
      if (same_halves && max_of(previous) <= best) chosen = previous, best = max_of(previous);
    }
    previous = chosen;
    trace.cycles = best;
    if (chosen != identity) {
      trace.rebalanced = true;
      pairings[wi] = std::move(chosen);
    }
  }

  for (std::int64_t step = 0; step < m.steps; ++step) {
    const Region base = wave_base(step);
    const auto wi = static_cast<std::size_t>(wave_of[static_cast<std::size_t>(step)]);
    WaveTrace& trace = cost.trace[wi];
    auto region_at = [&](std::int64_t gr, std::int64_t gc) { return region_of(base, gr, gc); };

    // Assignment of (half) tiles to PE groups. Half ranges follow this
    // step's split range; the pairing was chosen for the whole wave.
    std::vector<Item> items;
    if (!pairings[wi].empty()) {
      const Pairing& chosen = pairings[wi];
      for (std::size_t slot = 0; slot < chosen.size(); ++slot) {
        for (const HalfId& id : {chosen[slot].first, chosen[slot].second}) {
          const Range sr = half_ranges[wi].at(id);
          if (sr.size() == 0) continue;
          const std::int64_t index = id.first;
          if (mode == BalanceMode::CrossArray) {
            const auto dst = static_cast<std::int64_t>(slot);
            items.push_back({index / gc_n, index % gc_n, dst / gc_n, dst % gc_n, id.second, sr});
          } else {
            const std::int64_t lanes = split_rows ? gc_n : gr_n;
            for (std::int64_t lane = 0; lane < lanes; ++lane) {
              if (split_rows)
                items.push_back({index, lane, static_cast<std::int64_t>(slot), lane, id.second, sr});
              else
                items.push_back({lane, index, lane, static_cast<std::int64_t>(slot), id.second, sr});
            }
          }
        }
      }
    } else {
      for (std::int64_t gr = 0; gr < gr_n; ++gr)
        for (std::int64_t gc = 0; gc < gc_n; ++gc) {
          if (!split) {
            items.push_back({gr, gc, gr, gc, -1, {}});
            continue;
          }
          const Range sr = region_at(gr, gc)[at(*split)];
          const std::int64_t cut = sr.size() < 2 ? sr.hi : sr.lo + sr.size() / 2;
          items.push_back({gr, gc, gr, gc, 0, {sr.lo, cut}});
          if (cut < sr.hi) items.push_back({gr, gc, gr, gc, 1, {cut, sr.hi}});
        }
    }

    // Traffic: distinct (piece, line) flows and (piece, PE) deliveries. A
    // piece a PE already held in the previous wave stays in its register
    // file and needs no new delivery; a flow costs a buffer access only when
    // some receiver on its line lacks the piece. Partial sums leave a PE
    // once, and are read back when a later reduction chunk resumes them.
    std::set<PieceKey> flows, unicasts, needed;
    std::vector<std::set<PieceKey>> now(held.size());
    bool accumulate = false;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (!depends(out_tensor, order[i]) && chunk_index[i] > 0) accumulate = true;
    double glb = 0.0, rf = 0.0;
    struct Flow {
      PieceKey line;
      double words;
      bool output;
    };
    std::vector<Flow> wave_flows;
    for (const Item& it : items) {
      Region r = region_at(it.orow, it.ocol);
      if (split && it.half >= 0) r[at(*split)] = it.split;
      const std::int64_t pe = it.drow * gc_n + it.dcol;
      for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        const Tensor3 t = tensors[ti];
        PieceKey key{};
        key[0] = static_cast<std::int64_t>(ti);
        for (Dim d : kAllDims) {
          const bool dep = depends(t, d);
          key[1 + 2 * at(d)] = dep ? r[at(d)].lo : -1;
          key[2 + 2 * at(d)] = dep ? r[at(d)].hi : -1;
        }
        const Role role = m.role(t);
        PieceKey line = key;
        line[11] = role == Role::H ? it.drow : role == Role::V ? it.dcol : role == Role::B ? 0 : pe;
        auto& set = role == Role::U ? unicasts : flows;
        const bool new_flow = set.insert(line).second;
        const auto pe_slot = static_cast<std::size_t>(pe);
        if (!now[pe_slot].insert(key).second) continue;
        if (held[pe_slot].count(key)) continue;
        const double words = wm.words(t, r);
        rf += words;
        if (new_flow || !needed.count(line)) {
          if (needed.insert(line).second) wave_flows.push_back({line, words, t == out_tensor});
        }
      }
    }
    for (const Flow& f : wave_flows) glb += f.words * ((f.output && accumulate) ? 2.0 : 1.0);
    held = std::move(now);
    trace.multicast_flows += static_cast<std::int64_t>(flows.size());
    trace.unicast_messages += static_cast<std::int64_t>(unicasts.size());
    cost.counts.rf += rf;
    cost.counts.glb += glb;
    cost.multicast_flows += static_cast<std::int64_t>(flows.size());
    cost.unicast_messages += static_cast<std::int64_t>(unicasts.size());
  }
  for (auto& trace : cost.trace) {
    trace.cycles += array.wave_cycles;
    cost.cycles += trace.cycles;
  }
  cost.waves = static_cast<std::int64_t>(cost.trace.size());
  cost.counts.rf += 4.0 * cost.counts.macs;
  cost.counts.dram_words = wm.dram_words();
  if (phase == Phase::WeightUpdate && sparsity.weights) {
    cost.qe_events = static_cast<double>(layer.weight_count());
    cost.counts.glb += cost.qe_events;
  }
  cost.energy.mac = cost.counts.macs * energy.mac;
  cost.energy.rf = cost.counts.rf * energy.rf;
  cost.energy.glb = cost.counts.glb * energy.glb;
  cost.energy.dram = cost.counts.dram_words * energy.dram;
  return cost;
}

// ---------------------------------------------------------------------------
// Network totals

EnergyBreakdown NetworkCost::energy() const {
  EnergyBreakdown e;
  for (const auto& p : phase_energy) e += p;
  return e;
}

Scheme Schedule::scheme_for(std::size_t weighted_index) const {
  if (schemes.empty()) return uniform;
  return schemes.at(weighted_index);
}

namespace {

std::size_t phase_slot(Phase p) { return static_cast<std::size_t>(p); }

void add_row(NetworkCost& total, const std::string& layer, PhaseCost cost) {
  const auto slot = phase_slot(cost.phase);
  total.phase_cycles[slot] += cost.cycles;
  total.phase_energy[slot] += cost.energy;
  total.rows.push_back({layer, std::move(cost)});
}

}  // namespace

NetworkCost network_cost(const Network& net, const Schedule& schedule, std::span<const LayerSparsity> sparsity,
                         const EnergyTable& energy, const ArrayConfig& array) {
  net.validate();
  const auto weighted = net.weighted_layers();
  if (!sparsity.empty() && sparsity.size() != weighted.size())
    throw ShapeError("expected sparsity for " + std::to_string(weighted.size()) + " weighted layers, got " +
                     std::to_string(sparsity.size()));
  if (!schedule.schemes.empty() && schedule.schemes.size() != weighted.size())
    throw ConfigError("schedule must name one mapping per weighted layer");
  NetworkCost total;
  const LayerSparsity dense;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    const auto& layer = net.layers[weighted[i]];
    const Mapping m = make_mapping(layer, array, schedule.scheme_for(i));
    for (Phase p : kAllPhases)
      add_row(total, layer.name,
              phase_cost(layer, m, p, sparsity.empty() ? dense : sparsity[i], schedule.balanced, energy, array));
  }
  return total;
}

NetworkCost ideal_cost(const Network& net, std::span<const double> weight_density,
                       std::span<const double> activation_density, const EnergyTable& energy,
                       const ArrayConfig& array, Scheme scheme) {
  const auto weighted = net.weighted_layers();
  if (weight_density.size() != weighted.size() || activation_density.size() != weighted.size())
    throw ShapeError("ideal cost needs one density per weighted layer");
  Schedule dense_schedule;
  dense_schedule.uniform = scheme;
  dense_schedule.balanced = false;
  NetworkCost dense = network_cost(net, dense_schedule, {}, energy, array);
  NetworkCost ideal;
  for (std::size_t i = 0; i < dense.rows.size(); ++i) {
    PhaseCost c = dense.rows[i].cost;
    const std::size_t li = i / 3;
    const double d = c.phase == Phase::WeightUpdate ? activation_density[li] : weight_density[li];
    if (d < 0.0 || d > 1.0) throw ConfigError("densities must lie in [0, 1]");
    c.cycles *= d;
    c.counts.macs *= d, c.counts.rf *= d, c.counts.glb *= d, c.counts.dram_words *= d;
    c.energy.mac *= d, c.energy.rf *= d, c.energy.glb *= d, c.energy.dram *= d;
    c.trace.clear();
    add_row(ideal, dense.rows[i].layer, std::move(c));
  }
  return ideal;
}

NetworkCost ideal_cost(const Network& net, double sparsity, const EnergyTable& energy, const ArrayConfig& array,
                       Scheme scheme) {
  if (!(sparsity >= 1.0)) throw ConfigError("sparsity factor must be at least 1");
  const std::vector<double> d(net.weighted_layers().size(), 1.0 / sparsity);
  return ideal_cost(net, d, d, energy, array, scheme);
}

// ---------------------------------------------------------------------------
// Synthetic masks

namespace {

CsbTensor encode_layer_weights(const LayerShape& l, std::vector<float> values) {
  if (l.kind == LayerKind::Fc) return CsbTensor::encode(Tensor({l.K, l.C}, std::move(values)), {1, 1});
  return CsbTensor::encode(Tensor({l.K, l.C, l.R, l.S}, std::move(values)),
                          {static_cast<std::uint32_t>(l.R), static_cast<std::uint32_t>(l.S)});
}

}  // namespace

CsbTensor uniform_weight_mask(const LayerShape& layer, double density) {
  if (density < 0.0 || density > 1.0) throw ConfigError("mask density must lie in [0, 1]");
  std::vector<float> v(static_cast<std::size_t>(layer.weight_count()), 0.0f);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::floor(static_cast<double>(i + 1) * density) > std::floor(static_cast<double>(i) * density)) v[i] = 1.0f;
  return encode_layer_weights(layer, std::move(v));
}

CsbTensor random_weight_mask(const LayerShape& layer, double density, double sigma, std::uint64_t seed) {
  if (density < 0.0 || density > 1.0) throw ConfigError("mask density must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<float> v(static_cast<std::size_t>(layer.weight_count()), 0.0f);
  const std::int64_t per_filter = layer.weight_count() / layer.K;
  for (std::int64_t k = 0; k < layer.K; ++k) {
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    const double dk = std::clamp(density * std::exp(sigma * z - 0.5 * sigma * sigma), 0.0, 1.0);
    for (std::int64_t i = 0; i < per_filter; ++i)
      if (uniform01(rng) < dk) v[static_cast<std::size_t>(k * per_filter + i)] = 1.0f;
  }
  return encode_layer_weights(layer, std::move(v));
}

void write_cost_csv(std::ostream& out, const NetworkCost& cost) {
  out << "layer,phase,mapping,balanced,cycles,macs,dense_macs,e_mac,e_rf,e_glb,e_dram,e_total,waves,flows,unicasts\n";
  for (const auto& row : cost.rows) {
    const auto& c = row.cost;
    out << row.layer << ',' << to_string(c.phase) << ",\"" << to_string(c.scheme) << "\"," << (c.balanced ? 1 : 0)
        << ',' << c.cycles << ',' << c.counts.macs << ',' << c.dense_macs << ',' << c.energy.mac << ','
        << c.energy.rf << ',' << c.energy.glb << ',' << c.energy.dram << ',' << c.energy.total() << ',' << c.waves
        << ',' << c.multicast_flows << ',' << c.unicast_messages << '\n';
  }
}

}  // namespace sta
