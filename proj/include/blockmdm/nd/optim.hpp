// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "blockmdm/nd/matrix.hpp"
#include "blockmdm/nd/rng.hpp"

namespace blockmdm::nd {

// Trainable tensor plus its gradient and AdamW moments.
struct Param {
  Param() = default;
  Param(std::string param_name, std::size_t rows, std::size_t cols, bool apply_decay = true)
      : name(std::move(param_name)),
        value(rows, cols),
        grad(rows, cols),
        moment1(rows, cols),
        moment2(rows, cols),
        decay(apply_decay) {}

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  bool decay = true;

  void zero_grad() { grad.set_zero(); }
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

// One decoupled-weight-decay Adam update at 1-based step `step`. Throws
// NumericError naming the parameter and flat index of the first non-finite
// gradient; no parameter is modified in that case.
void adamw_step(std::span<Param* const> params, const AdamWConfig& cfg, std::uint64_t step);

// Global L2 norm of all gradients.
double grad_norm(std::span<Param* const> params);

struct GradCheckReport {
  double epsilon = 0.0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t nonzero_analytic = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Loss closure: when `with_grad` is true it must zero and then populate
// every Param::grad; otherwise it only returns the loss.
using LossClosure = std::function<double(bool with_grad)>;

// Compares analytic gradients against central differences on
// `samples_per_param` random coordinates of every parameter (all
// coordinates when the parameter is smaller). The relative error of a
// coordinate is |a - n| / max(|a|, |n|, abs_floor); 0/0 counts as 0.
// epsilon must lie in [1e-7, 1e-3].
GradCheckReport grad_check(const LossClosure& loss, std::span<Param* const> params, double epsilon,
                           std::size_t samples_per_param, Rng& rng, double abs_floor = 1e-6);

}  // namespace blockmdm::nd
