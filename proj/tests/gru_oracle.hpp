#pragma once

// Reference GRU recurrence and a central-difference gradient check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dfsom/gru.hpp"

namespace dfsom::oracle {

/// One step written out scalar by scalar:
///   z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br)
///   c = tanh(Wc x + Uc (r*h) + bc), h' = (1-z) h + z c
inline std::vector<double> reference_step(const GruCell& c, const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t n = c.hidden_dim, in = c.input_dim;
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  std::vector<double> z(n), r(n), out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double az = c.b_update[j], ar = c.b_reset[j];
    for (std::size_t i = 0; i < in; ++i) az += c.w_update(j, i) * x[i], ar += c.w_reset(j, i) * x[i];
    for (std::size_t i = 0; i < n; ++i) az += c.u_update(j, i) * h[i], ar += c.u_reset(j, i) * h[i];
    z[j] = sig(az);
    r[j] = sig(ar);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double ac = c.b_cand[j];
    for (std::size_t i = 0; i < in; ++i) ac += c.w_cand(j, i) * x[i];
    for (std::size_t i = 0; i < n; ++i) ac += c.u_cand(j, i) * (r[i] * h[i]);
    out[j] = (1 - z[j]) * h[j] + z[j] * std::tanh(ac);
  }
  return out;
}

inline double reference_forward(const GruRegressor& m, const Matrix& seq) {
  std::vector<double> h(m.cell.hidden_dim, 0.0);
  for (std::size_t t = 0; t < seq.rows(); ++t)
    h = reference_step(m.cell, std::vector<double>(seq.row_ptr(t), seq.row_ptr(t) + seq.cols()), h);
  double y = m.readout_bias[0];
  for (std::size_t j = 0; j < h.size(); ++j) y += m.readout[j] * h[j];
  return y;
}

/// Random model with every parameter (biases included) in [-1, 1], plus
/// random training windows.
struct GradientInstance {
  GruRegressor model;
  std::vector<TrainingWindow> windows;
};

inline GradientInstance random_instance(std::uint64_t seed, std::size_t hidden = 3, std::size_t length = 4,
                                        std::size_t input = 1, std::size_t n_windows = 3) {
  Rng rng(seed);
  GradientInstance g{GruRegressor(input, hidden), {}};
  auto flat = g.model.flatten();
  for (auto& v : flat) v = rng.uniform(-1, 1);
  g.model.assign(flat);
  for (std::size_t w = 0; w < n_windows; ++w) {
    TrainingWindow tw{w, Matrix(length, input), rng.uniform(-1, 1)};
    for (auto& v : tw.sequence.data()) v = rng.uniform(-1, 1);
    g.windows.push_back(std::move(tw));
  }
  return g;
}

inline double loss_at(const GruRegressor& m, const std::vector<TrainingWindow>& windows) {
  double s = 0;
  for (const auto& w : windows) {
    const double e = reference_forward(m, w.sequence) - w.target;
    s += e * e;
  }
  return s / static_cast<double>(windows.size());
}

/// Largest per-parameter |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double gradient_check(const GradientInstance& g, double step = 1e-5, double floor = 1e-8) {
  std::vector<const TrainingWindow*> ptrs;
  for (const auto& w : g.windows) ptrs.push_back(&w);
  GruRegressor grad;
  loss_and_gradient(g.model, ptrs, grad);
  const auto analytic = grad.flatten();
  const auto base = g.model.flatten();
  double worst = 0;
  GruRegressor probe = g.model;
  for (std::size_t k = 0; k < base.size(); ++k) {
    auto p = base;
    p[k] = base[k] + step;
    probe.assign(p);
    const double up = loss_at(probe, g.windows);
    p[k] = base[k] - step;
    probe.assign(p);
    const double down = loss_at(probe, g.windows);
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace dfsom::oracle
