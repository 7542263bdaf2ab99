#pragma once

// GRU sequence regressors, one per DFSOM cluster, trained by full-batch
// gradient descent on mean squared error with exact backpropagation
// through time.
//
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   h~ = tanh(Wh x + Uh (r * h) + bh)
//   h' = (1 - z) * h + z * h~
//   y  = v . h_T + c

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dfsom/core.hpp"

namespace dfsom {

struct GruCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix w_update, u_update;
  std::vector<double> b_update;
  Matrix w_reset, u_reset;
  std::vector<double> b_reset;
  Matrix w_cand, u_cand;
  std::vector<double> b_cand;

  GruCell() = default;
  GruCell(std::size_t input, std::size_t hidden)
      : input_dim(input),
        hidden_dim(hidden),
        w_update(hidden, input),
        u_update(hidden, hidden),
        b_update(hidden),
        w_reset(hidden, input),
        u_reset(hidden, hidden),
        b_reset(hidden),
        w_cand(hidden, input),
        u_cand(hidden, hidden),
        b_cand(hidden) {}

  friend bool operator==(const GruCell&, const GruCell&) = default;
};

/// GRU cell plus a linear readout of the final hidden state.
struct GruRegressor {
  GruCell cell;
  std::vector<double> readout;
  std::vector<double> readout_bias{0.0};

  GruRegressor() = default;
  GruRegressor(std::size_t input, std::size_t hidden) : cell(input, hidden), readout(hidden) {}

  /// Every parameter block, in serialization order.
  std::vector<std::vector<double>*> blocks() {
    auto& c = cell;
    return {&c.w_update.data(), &c.u_update.data(), &c.b_update, &c.w_reset.data(), &c.u_reset.data(),
            &c.b_reset,         &c.w_cand.data(),   &c.u_cand.data(), &c.b_cand, &readout, &readout_bias};
  }
  std::vector<const std::vector<double>*> blocks() const {
    auto* self = const_cast<GruRegressor*>(this);
    auto b = self->blocks();
    return {b.begin(), b.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* b : blocks()) n += b->size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (auto* b : blocks()) out.insert(out.end(), b->begin(), b->end());
    return out;
  }

  void assign(std::span<const double> flat) {
    std::size_t k = 0;
    for (auto* b : blocks())
      for (auto& v : *b) v = flat[k++];
  }

  friend bool operator==(const GruRegressor&, const GruRegressor&) = default;
};

namespace detail {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

inline void affine(const Matrix& w, std::span<const double> x, const Matrix& u, std::span<const double> h,
                   std::span<const double> b, std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = b[j];
    const double* wr = w.row_ptr(j);
    for (std::size_t i = 0; i < x.size(); ++i) s += wr[i] * x[i];
    const double* ur = u.row_ptr(j);
    for (std::size_t i = 0; i < h.size(); ++i) s += ur[i] * h[i];
    out[j] = s;
  }
}

struct StepTrace {
  std::vector<double> h_prev, z, r, rh, cand, h;
};

inline StepTrace step_traced(const GruCell& c, std::span<const double> x, std::span<const double> h) {
  const auto n = c.hidden_dim;
  StepTrace t{{h.begin(), h.end()}, std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
              std::vector<double>(n), std::vector<double>(n)};
  affine(c.w_update, x, c.u_update, h, c.b_update, t.z);
  affine(c.w_reset, x, c.u_reset, h, c.b_reset, t.r);
  for (std::size_t j = 0; j < n; ++j) {
    t.z[j] = sigmoid(t.z[j]);
    t.r[j] = sigmoid(t.r[j]);
    t.rh[j] = t.r[j] * h[j];
  }
  affine(c.w_cand, x, c.u_cand, t.rh, c.b_cand, t.cand);
  for (std::size_t j = 0; j < n; ++j) {
    t.cand[j] = std::tanh(t.cand[j]);
    t.h[j] = (1.0 - t.z[j]) * h[j] + t.z[j] * t.cand[j];
  }
  return t;
}

}  // namespace detail

inline std::vector<double> gru_step(const GruCell& cell, std::span<const double> x, std::span<const double> h) {
  if (x.size() != cell.input_dim || h.size() != cell.hidden_dim) throw DataError("GRU step dimension mismatch");
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("non-finite GRU input");
  return detail::step_traced(cell, x, h).h;
}

/// Runs the cell over `sequence` (one row per time step) from a zero state
/// and applies the readout.
inline double forward(const GruRegressor& model, const Matrix& sequence) {
  if (sequence.cols() != model.cell.input_dim) throw DataError("sequence width does not match GRU input");
  std::vector<double> h(model.cell.hidden_dim, 0.0);
  for (std::size_t t = 0; t < sequence.rows(); ++t)
    h = detail::step_traced(model.cell, {sequence.row_ptr(t), sequence.cols()}, h).h;
  double y = model.readout_bias[0];
  for (std::size_t j = 0; j < h.size(); ++j) y += model.readout[j] * h[j];
  return y;
}

struct TrainingWindow {
  std::size_t cluster = 0;
  Matrix sequence;  // time steps x input_dim
  double target = 0;
};

/// Accumulates d(loss)/d(params) for one sequence into `grad`, where the
/// sequence contributes `weight * (y - target)^2` to the loss. Returns the
/// squared error.
inline double accumulate_gradient(const GruRegressor& model, const Matrix& sequence, double target, double weight,
                                  GruRegressor& grad) {
  const auto& c = model.cell;
  const auto n = c.hidden_dim;
  const auto in = c.input_dim;
  std::vector<detail::StepTrace> trace;
  trace.reserve(sequence.rows());
  std::vector<double> h(n, 0.0);
  for (std::size_t t = 0; t < sequence.rows(); ++t) {
    trace.push_back(detail::step_traced(c, {sequence.row_ptr(t), in}, h));
    h = trace.back().h;
  }
  double y = model.readout_bias[0];
  for (std::size_t j = 0; j < n; ++j) y += model.readout[j] * h[j];
  const double err = y - target;
  const double g = 2.0 * weight * err;

  std::vector<double> dh(n);
  for (std::size_t j = 0; j < n; ++j) {
    grad.readout[j] += g * h[j];
    dh[j] = g * model.readout[j];
  }
  grad.readout_bias[0] += g;

  auto& gc = grad.cell;
  std::vector<double> da_z(n), da_r(n), da_c(n), d_rh(n), dh_prev(n);
  for (std::size_t t = sequence.rows(); t-- > 0;) {
    const auto& s = trace[t];
    const double* x = sequence.row_ptr(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double dcand = dh[j] * s.z[j];
      const double dz = dh[j] * (s.cand[j] - s.h_prev[j]);
      dh_prev[j] = dh[j] * (1.0 - s.z[j]);
      da_c[j] = dcand * (1.0 - s.cand[j] * s.cand[j]);
      da_z[j] = dz * s.z[j] * (1.0 - s.z[j]);
    }
    // candidate path through r * h_prev
    std::fill(d_rh.begin(), d_rh.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double* ur = c.u_cand.row_ptr(j);
      for (std::size_t i = 0; i < n; ++i) d_rh[i] += ur[i] * da_c[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double dr = d_rh[i] * s.h_prev[i];
      dh_prev[i] += d_rh[i] * s.r[i];
      da_r[i] = dr * s.r[i] * (1.0 - s.r[i]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < in; ++i) {
        gc.w_update(j, i) += da_z[j] * x[i];
        gc.w_reset(j, i) += da_r[j] * x[i];
        gc.w_cand(j, i) += da_c[j] * x[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        gc.u_update(j, i) += da_z[j] * s.h_prev[i];
        gc.u_reset(j, i) += da_r[j] * s.h_prev[i];
        gc.u_cand(j, i) += da_c[j] * s.rh[i];
        dh_prev[i] += c.u_update(j, i) * da_z[j] + c.u_reset(j, i) * da_r[j];
      }
      gc.b_update[j] += da_z[j];
      gc.b_reset[j] += da_r[j];
      gc.b_cand[j] += da_c[j];
    }
    dh.swap(dh_prev);
  }
  return err * err;
}

/// Mean squared error over `windows` and its gradient.
inline double loss_and_gradient(const GruRegressor& model, std::span<const TrainingWindow* const> windows,
                                GruRegressor& grad) {
  grad = GruRegressor(model.cell.input_dim, model.cell.hidden_dim);
  const double w = 1.0 / static_cast<double>(windows.size());
  double loss = 0;
  for (const auto* win : windows) loss += w * accumulate_gradient(model, win->sequence, win->target, w, grad);
  return loss;
}

inline double mean_squared_error(const GruRegressor& model, std::span<const TrainingWindow* const> windows) {
  double loss = 0;
  for (const auto* win : windows) {
    const double e = forward(model, win->sequence) - win->target;
    loss += e * e;
  }
  return loss / static_cast<double>(windows.size());
}

inline GruRegressor init_regressor(std::size_t input, std::size_t hidden, std::uint64_t seed) {
  GruRegressor m(input, hidden);
  Rng rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto* b : {&m.cell.w_update.data(), &m.cell.u_update.data(), &m.cell.w_reset.data(),
                  &m.cell.u_reset.data(), &m.cell.w_cand.data(), &m.cell.u_cand.data(), &m.readout})
    for (auto& v : *b) v = rng.uniform(-a, a);
  return m;
}

struct GruConfig {
  std::size_t hidden_dim = 16;
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  std::size_t min_samples = 20;
  std::uint64_t seed = 7;

  void validate() const {
    if (hidden_dim == 0) throw ConfigError("GRU hidden_dim must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("GRU learning rate must be positive");
  }
};

struct ClusterModel {
  GruRegressor regressor;
  std::size_t samples = 0;
  std::vector<double> loss_curve;  // loss before each epoch's update, then final
};

/// Fits `model` in place by plain gradient descent. `label` names the
/// model in divergence errors.
inline std::vector<double> train_regressor(GruRegressor& model, std::span<const TrainingWindow* const> windows,
                                           const GruConfig& cfg, const std::string& label) {
  std::vector<double> curve;
  curve.reserve(cfg.epochs + 1);
  GruRegressor grad;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = loss_and_gradient(model, windows, grad);
    if (!std::isfinite(loss)) throw NumericError("GRU training diverged for " + label + " at epoch " + std::to_string(e));
    curve.push_back(loss);
    auto params = model.blocks();
    auto grads = grad.blocks();
    for (std::size_t b = 0; b < params.size(); ++b)
      for (std::size_t k = 0; k < params[b]->size(); ++k) (*params[b])[k] -= cfg.learning_rate * (*grads[b])[k];
  }
  const double final_loss = mean_squared_error(model, windows);
  if (!std::isfinite(final_loss)) throw NumericError("GRU training diverged for " + label);
  curve.push_back(final_loss);
  return curve;
}

struct ClusterModelSet {
  std::map<std::size_t, ClusterModel> models;
  std::optional<ClusterModel> fallback;

  const GruRegressor& model_for(std::size_t cluster) const {
    if (auto it = models.find(cluster); it != models.end()) return it->second.regressor;
    if (fallback) return fallback->regressor;
    throw DataError("no GRU model for cluster " + std::to_string(cluster) + " and no fallback");
  }
};

/// One regressor per cluster with at least `min_samples` windows, plus a
/// fallback trained on every window.
inline ClusterModelSet train_models(std::span<const TrainingWindow> windows, const GruConfig& cfg) {
  cfg.validate();
  if (windows.empty()) throw DataError("GRU training needs at least one window");
  const auto input = windows.front().sequence.cols();
  std::map<std::size_t, std::vector<const TrainingWindow*>> by_cluster;
  std::vector<const TrainingWindow*> all;
  for (const auto& w : windows) {
    if (w.sequence.cols() != input || w.sequence.rows() == 0) throw DataError("inconsistent GRU training sequences");
    by_cluster[w.cluster].push_back(&w);
    all.push_back(&w);
  }
  ClusterModelSet set;
  ClusterModel fb{init_regressor(input, cfg.hidden_dim, derive_seed(cfg.seed, 0)), all.size(), {}};
  fb.loss_curve = train_regressor(fb.regressor, all, cfg, "fallback model");
  set.fallback = std::move(fb);
  for (const auto& [cluster, members] : by_cluster) {
    if (members.size() < cfg.min_samples) continue;
    ClusterModel m{init_regressor(input, cfg.hidden_dim, derive_seed(cfg.seed, cluster + 1)), members.size(), {}};
    m.loss_curve = train_regressor(m.regressor, members, cfg, "cluster " + std::to_string(cluster));
    set.models.emplace(cluster, std::move(m));
  }
  return set;
}

inline double predict(const ClusterModelSet& set, std::size_t cluster, const Matrix& sequence) {
  return forward(set.model_for(cluster), sequence);
}

// ---------------------------------------------------------------------------
// Serialization: "DFGR" u32 count u8 has_fallback, then per model u64 cluster
// (UINT64_MAX for the fallback) u32 input u32 hidden u32 samples and the
// flattened f64 parameters.

inline void write_models(std::ostream& out, const ClusterModelSet& set) {
  out.write("DFGR", 4);
  io::write_pod(out, static_cast<std::uint32_t>(set.models.size()));
  io::write_pod(out, static_cast<std::uint8_t>(set.fallback.has_value()));
  auto put = [&](std::uint64_t id, const ClusterModel& m) {
    io::write_pod(out, id);
    io::write_pod(out, static_cast<std::uint32_t>(m.regressor.cell.input_dim));
    io::write_pod(out, static_cast<std::uint32_t>(m.regressor.cell.hidden_dim));
    io::write_pod(out, static_cast<std::uint32_t>(m.samples));
    io::write_doubles(out, m.regressor.flatten());
  };
  if (set.fallback) put(UINT64_MAX, *set.fallback);
  for (const auto& [id, m] : set.models) put(id, m);
}

inline ClusterModelSet read_models(std::istream& in) {
  io::expect_magic(in, "DFGR");
  const auto count = io::read_pod<std::uint32_t>(in);
  const bool has_fallback = io::read_pod<std::uint8_t>(in) != 0;
  auto get = [&](std::uint64_t& id) {
    id = io::read_pod<std::uint64_t>(in);
    const auto input = io::read_pod<std::uint32_t>(in);
    const auto hidden = io::read_pod<std::uint32_t>(in);
    ClusterModel m{GruRegressor(input, hidden), io::read_pod<std::uint32_t>(in), {}};
    std::vector<double> flat(m.regressor.parameter_count());
    io::read_doubles(in, flat);
    m.regressor.assign(flat);
    return m;
  };
  ClusterModelSet set;
  std::uint64_t id = 0;
  if (has_fallback) set.fallback = get(id);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto m = get(id);
    set.models.emplace(static_cast<std::size_t>(id), std::move(m));
  }
  return set;
}

/// cluster,samples,epoch,loss rows; the fallback is labelled "fallback".
inline void write_loss_curves(std::ostream& out, const ClusterModelSet& set) {
  out << "cluster,samples,epoch,loss\n";
  auto put = [&](const std::string& label, const ClusterModel& m) {
    for (std::size_t e = 0; e < m.loss_curve.size(); ++e)
      out << label << ',' << m.samples << ',' << e << ',' << fmt_double(m.loss_curve[e]) << '\n';
  };
  if (set.fallback) put("fallback", *set.fallback);
  for (const auto& [id, m] : set.models) put(std::to_string(id), m);
}

}  // namespace dfsom
