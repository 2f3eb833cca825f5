// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/nd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "blockmdm/errors.hpp"

namespace blockmdm::nd {

double grad_norm(std::span<Param* const> params) {
  double sq = 0.0;
  for (const Param* p : params) {
    for (double g : p->grad.flat()) sq += g * g;
  }
  return std::sqrt(sq);
}

void adamw_step(std::span<Param* const> params, const AdamWConfig& cfg, std::uint64_t step) {
  if (step == 0) throw ParameterError("adamw_step: step is 1-based");
  for (const Param* p : params) {
    const auto g = p->grad.flat();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("adamw_step: non-finite gradient " + std::to_string(g[i]) + " in '" +
                           p->name + "' at flat index " + std::to_string(i) + " (step " +
                           std::to_string(step) + ")");
      }
    }
  }
  double clip = 1.0;
  if (cfg.clip_norm > 0.0) {
    const double norm = grad_norm(params);
    if (norm > cfg.clip_norm) clip = cfg.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Param* p : params) {
    auto w = p->value.flat();
    const auto g = p->grad.flat();
    auto m = p->moment1.flat();
    auto v = p->moment2.flat();
    const double decay = p->decay ? cfg.lr * cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= decay * w[i];
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

GradCheckReport grad_check(const LossClosure& loss, std::span<Param* const> params, double epsilon,
                           std::size_t samples_per_param, Rng& rng, double abs_floor) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw ParameterError("grad_check: epsilon must lie in [1e-7, 1e-3], got " +
                         std::to_string(epsilon));
  }
  GradCheckReport report;
  report.epsilon = epsilon;

  loss(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords;
    if (n <= samples_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords = rng.sample_without_replacement(n, samples_per_param);
    }
    for (std::size_t idx : coords) {
      double& w = p.value.flat()[idx];
      const double saved = w;
      w = saved + epsilon;
      const double up = loss(false);
      w = saved - epsilon;
      const double down = loss(false);
      w = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi].flat()[idx];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = abs_err == 0.0 ? 0.0 : abs_err / denom;
      ++report.checked;
      if (a != 0.0) ++report.nonzero_analytic;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        if (rel >= report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_param = p.name;
          report.worst_index = idx;
        }
      }
    }
  }
  // Leave analytic gradients in place for the caller.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return report;
}

}  // namespace blockmdm::nd
