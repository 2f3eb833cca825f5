// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/nd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "blockmdm/errors.hpp"

namespace blockmdm::nd {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return {m.data(), static_cast<Eigen::Index>(m.rows()),
                                         static_cast<Eigen::Index>(m.cols())}; }
MutMap view(Matrix& m) { return {m.data(), static_cast<Eigen::Index>(m.rows()),
                                 static_cast<Eigen::Index>(m.cols())}; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  gemm(a, false, b, false, out, false);
  return out;
}

void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& out,
          bool accumulate) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (ka != kb || out.rows() != m || out.cols() != n) {
    throw DimensionError("gemm: op(a) " + std::to_string(m) + "x" + std::to_string(ka) +
                         ", op(b) " + std::to_string(kb) + "x" + std::to_string(n) + ", out " +
                         out.shape_string());
  }
  if (m == 0 || n == 0) return;
  auto o = view(out);
  if (ka == 0) {
    if (!accumulate) o.setZero();
    return;
  }
  const auto av = view(a);
  const auto bv = view(b);
  if (!accumulate) o.setZero();
  if (!transpose_a && !transpose_b) {
    o.noalias() += av * bv;
  } else if (transpose_a && !transpose_b) {
    o.noalias() += av.transpose() * bv;
  } else if (!transpose_a && transpose_b) {
    o.noalias() += av * bv.transpose();
  } else {
    o.noalias() += av.transpose() * bv.transpose();
  }
}

MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dout) {
  if (dout.rows() != a.rows() || dout.cols() != b.cols()) {
    throw DimensionError("matmul_backward: upstream " + dout.shape_string() + " for " +
                         a.shape_string() + " * " + b.shape_string());
  }
  MatmulGrads g{Matrix(a.rows(), a.cols()), Matrix(b.rows(), b.cols())};
  gemm(dout, false, b, true, g.da, false);
  gemm(a, true, dout, false, g.db, false);
  return g;
}

double log_sum_exp(std::span<const double> z, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : z) mx = std::max(mx, x / temperature);
  double sum = 0.0;
  for (double x : z) sum += std::exp(x / temperature - mx);
  return mx + std::log(sum);
}

void softmax_row(std::span<const double> z, std::span<double> out, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : z) mx = std::max(mx, x / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] / temperature - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double& p : out) p *= inv;
}

Matrix softmax_rows(const Matrix& z, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax_rows: temperature must be positive");
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) softmax_row(z.row(r), out.row(r), temperature);
  return out;
}

Matrix log_softmax_rows(const Matrix& z, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("log_softmax_rows: temperature must be positive");
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    const double lse = log_sum_exp(row, temperature);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) dst[c] = row[c] / temperature - lse;
  }
  return out;
}

double softmax_entropy(std::span<const double> z) {
  const double lse = log_sum_exp(z);
  double h = 0.0;
  for (double x : z) {
    const double logp = x - lse;
    h -= std::exp(logp) * logp;
  }
  return h;
}

LossGrad masked_cross_entropy(const Matrix& logits, std::span<const std::int32_t> targets,
                              std::span<const std::size_t> rows) {
  if (targets.size() != logits.rows()) {
    throw DimensionError("masked_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + logits.shape_string());
  }
  LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t t : rows) {
    if (t >= logits.rows()) {
      throw ParameterError("masked_cross_entropy: row " + std::to_string(t) + " out of range");
    }
    const std::int32_t y = targets[t];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ParameterError("masked_cross_entropy: target " + std::to_string(y) + " at row " +
                           std::to_string(t) + " outside vocabulary of " +
                           std::to_string(logits.cols()));
    }
    const auto z = logits.row(t);
    const double lse = log_sum_exp(z);
    out.value += lse - z[static_cast<std::size_t>(y)];
    auto g = out.grad.row(t);
    for (std::size_t c = 0; c < z.size(); ++c) g[c] += std::exp(z[c] - lse);
    g[static_cast<std::size_t>(y)] -= 1.0;
  }
  return out;
}

LossGrad kl_rows(const Matrix& student, const Matrix& teacher, double tau, KlDirection direction,
                 std::span<const std::size_t> rows) {
  require_same_shape(student, teacher, "kl_rows");
  if (!(tau > 0.0)) throw ParameterError("kl_rows: tau must be positive, got " + std::to_string(tau));
  LossGrad out{0.0, Matrix(student.rows(), student.cols())};
  if (rows.empty()) return out;

  const std::size_t v = student.cols();
  const double scale = tau * tau / static_cast<double>(rows.size());
  std::vector<double> log_s(v), log_t(v);
  for (std::size_t t : rows) {
    if (t >= student.rows()) {
      throw ParameterError("kl_rows: row " + std::to_string(t) + " out of range");
    }
    const auto zs = student.row(t);
    const auto zt = teacher.row(t);
    const double lse_s = log_sum_exp(zs, tau);
    const double lse_t = log_sum_exp(zt, tau);
    for (std::size_t c = 0; c < v; ++c) {
      log_s[c] = zs[c] / tau - lse_s;
      log_t[c] = zt[c] / tau - lse_t;
    }
    auto g = out.grad.row(t);
    double kl = 0.0;
    if (direction == KlDirection::reverse) {
      for (std::size_t c = 0; c < v; ++c) kl += std::exp(log_s[c]) * (log_s[c] - log_t[c]);
      // d/dz_c = (1/tau) p_s[c] * ((log p_s[c] - log p_t[c]) - KL)
      for (std::size_t c = 0; c < v; ++c) {
        g[c] = scale / tau * std::exp(log_s[c]) * ((log_s[c] - log_t[c]) - kl);
      }
    } else {
      for (std::size_t c = 0; c < v; ++c) kl += std::exp(log_t[c]) * (log_t[c] - log_s[c]);
      // d/dz_c = (1/tau) (p_s[c] - p_t[c])
      for (std::size_t c = 0; c < v; ++c) {
        g[c] = scale / tau * (std::exp(log_s[c]) - std::exp(log_t[c]));
      }
    }
    out.value += scale * kl;
  }
  return out;
}

LossGrad kl_rows(const Matrix& student, const Matrix& teacher, double tau, KlDirection direction) {
  std::vector<std::size_t> all(student.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return kl_rows(student, teacher, tau, direction, all);
}

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Visibility& mask,
                        AttentionCache* cache) {
  if (!q.same_shape(k) || k.rows() != v.rows()) {
    throw DimensionError("masked_attention: q " + q.shape_string() + ", k " + k.shape_string() +
                         ", v " + v.shape_string());
  }
  const std::size_t t = q.rows();
  if (mask.rows() != t || mask.cols() != t) {
    throw DimensionError("masked_attention: mask " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + " for sequence length " + std::to_string(t));
  }
  Matrix scores(t, t);
  gemm(q, false, k, true, scores, false);
  const double scale = q.cols() == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t i = 0; i < t; ++i) {
    auto row = scores.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < t; ++j) {
      if (mask(i, j)) mx = std::max(mx, row[j] * scale);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("masked_attention: query row " + std::to_string(i) +
                          " has no visible positions");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      row[j] = mask(i, j) ? std::exp(row[j] * scale - mx) : 0.0;
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (double& w : row) w *= inv;
  }
  Matrix out(t, v.cols());
  gemm(scores, false, v, false, out, false);
  if (cache != nullptr) cache->weights = std::move(scores);
  return out;
}

AttentionGrads masked_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         const AttentionCache& cache, const Matrix& dout) {
  const std::size_t t = q.rows();
  const Matrix& p = cache.weights;
  AttentionGrads g{Matrix(q.rows(), q.cols()), Matrix(k.rows(), k.cols()),
                   Matrix(v.rows(), v.cols())};
  gemm(p, true, dout, false, g.dv, false);
  Matrix dp(t, t);
  gemm(dout, false, v, true, dp, false);
  const double scale = q.cols() == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(q.cols()));
  // dS = P .* (dP - rowsum(dP .* P)), folded with the 1/sqrt(d) factor.
  for (std::size_t i = 0; i < t; ++i) {
    auto dpr = dp.row(i);
    const auto pr = p.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < t; ++j) dot += dpr[j] * pr[j];
    for (std::size_t j = 0; j < t; ++j) dpr[j] = pr[j] * (dpr[j] - dot) * scale;
  }
  gemm(dp, false, k, false, g.dq, false);
  gemm(dp, true, q, false, g.dk, false);
  return g;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("linear: x " + x.shape_string() + ", w " + w.shape_string() + ", b " +
                         b.shape_string());
  }
  Matrix y(x.rows(), w.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    std::copy(b.row(0).begin(), b.row(0).end(), y.row(r).begin());
  }
  gemm(x, false, w, false, y, true);
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db) {
  gemm(x, true, dy, false, dw, true);
  auto dbr = db.row(0);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) dbr[c] += row[c];
  }
  Matrix dx(x.rows(), x.cols());
  gemm(dy, false, w, true, dx, false);
  return dx;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache* cache,
                  double eps) {
  const std::size_t d = x.cols();
  if (gamma.cols() != d || beta.cols() != d) {
    throw DimensionError("layer_norm: x " + x.shape_string() + ", gamma " + gamma.shape_string());
  }
  Matrix y(x.rows(), d);
  Matrix normalized(x.rows(), d);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto nr = normalized.row(r);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      nr[c] = (row[c] - mean) * is;
      yr[c] = nr[c] * gamma(0, c) + beta(0, c);
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_stddev = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma, const Matrix& dy,
                           Matrix& dgamma, Matrix& dbeta) {
  const Matrix& xhat = cache.normalized;
  const std::size_t d = xhat.cols();
  Matrix dx(xhat.rows(), d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    const auto dyr = dy.row(r);
    const auto xr = xhat.row(r);
    double sum_dxhat = 0.0;
    double sum_dxhat_x = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dgamma(0, c) += dyr[c] * xr[c];
      dbeta(0, c) += dyr[c];
      dxhat[c] = dyr[c] * gamma(0, c);
      sum_dxhat += dxhat[c];
      sum_dxhat_x += dxhat[c] * xr[c];
    }
    const double n = static_cast<double>(d);
    auto dxr = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      dxr[c] = cache.inv_stddev[r] / n * (n * dxhat[c] - sum_dxhat - xr[c] * sum_dxhat_x);
    }
  }
  return dx;
}

Matrix relu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  auto src = x.flat();
  auto dst = y.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  auto src = x.flat();
  auto g = dy.flat();
  auto dst = dx.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? g[i] : 0.0;
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix gelu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  auto src = x.flat();
  auto dst = y.flat();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i];
    dst[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return y;
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  auto src = x.flat();
  auto g = dy.flat();
  auto dst = dx.flat();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i];
    const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    dst[i] = g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner);
  }
  return dx;
}

Matrix column_slice(const Matrix& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) {
    throw DimensionError("column_slice: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + x.shape_string());
  }
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void add_column_slice(Matrix& dst, std::size_t begin, const Matrix& src) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("add_column_slice: " + src.shape_string() + " into " +
                         dst.shape_string() + " at column " + std::to_string(begin));
  }
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto d = dst.row(r).subspan(begin, src.cols());
    const auto s = src.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) d[c] += s[c];
  }
}

}  // namespace blockmdm::nd
