// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the tests. They favour
// obviousness over speed and share no code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "blockmdm/nd/matrix.hpp"
#include "blockmdm/nd/rng.hpp"

namespace oracle {

using blockmdm::nd::Matrix;

// Central-difference gradient of a scalar function of one matrix.
inline Matrix numeric_grad(const std::function<double()>& f, Matrix& x, double eps = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.flat()[i];
    x.flat()[i] = saved + eps;
    const double up = f();
    x.flat()[i] = saved - eps;
    const double down = f();
    x.flat()[i] = saved;
    g.flat()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.flat()[i], y = b.flat()[i];
    const double d = std::abs(x - y);
    if (d == 0.0) continue;
    worst = std::max(worst, d / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, blockmdm::nd::Rng& rng,
                            double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = scale * rng.normal();
  return m;
}

// Plain softmax by direct exponentiation (no stabilisation; callers keep
// logits small).
inline std::vector<double> softmax(const std::vector<double>& z) {
  double s = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i]));
  for (double& v : p) v /= s;
  return p;
}

// Full-table Levenshtein distance.
template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    }
  }
  return d[a.size()][b.size()];
}

// Iterates the even-allocation schedule from R for K steps.
inline std::vector<std::size_t> schedule_trace(std::size_t r, std::size_t k) {
  std::vector<std::size_t> n;
  for (std::size_t j = 1; j <= k; ++j) {
    const std::size_t left = k - j + 1;
    const std::size_t take = r == 0 ? 0 : (r + left - 1) / left;
    n.push_back(take);
    r -= take;
  }
  return n;
}

// E[g(U)] for U ~ Uniform[lo, hi] by a fine midpoint rule (exact value when
// lo == hi).
inline double uniform_expectation(double lo, double hi, const std::function<double(double)>& g,
                                  std::size_t points = 1 << 20) {
  if (lo == hi) return g(lo);
  double s = 0.0;
  const double h = (hi - lo) / static_cast<double>(points);
  for (std::size_t i = 0; i < points; ++i) s += g(lo + (static_cast<double>(i) + 0.5) * h);
  return s / static_cast<double>(points);
}

// Expected masked fraction of the hierarchical sampler with floors included,
// for T a multiple of B: E[floor(gc K)] / K * E[min(B, max(1, floor(gt B)))] / B.
inline double hierarchical_fraction(double c_lo, double c_hi, double t_lo, double t_hi,
                                    std::size_t blocks, std::size_t b) {
  const double kb = static_cast<double>(blocks), bb = static_cast<double>(b);
  const double sel =
      uniform_expectation(c_lo, c_hi, [&](double g) { return std::floor(g * kb); }) / kb;
  const double per = uniform_expectation(t_lo, t_hi, [&](double g) {
                       return std::min(bb, std::max(1.0, std::floor(g * bb)));
                     }) / bb;
  return sel * per;
}

}  // namespace oracle
