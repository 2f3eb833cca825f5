// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blockmdm/nd/matrix.hpp"

namespace blockmdm::nd {

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

// a * b. Throws DimensionError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// out (+)= op(a) * op(b) where op transposes when requested. `out` must
// already have the result shape.
void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& out,
          bool accumulate);

struct MatmulGrads {
  Matrix da;
  Matrix db;
};

// Gradients of a*b given the upstream gradient d(a*b).
MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dout);

// ---------------------------------------------------------------------------
// Row-wise distributions
// ---------------------------------------------------------------------------

// softmax(z / temperature) per row, log-sum-exp stabilised.
Matrix softmax_rows(const Matrix& z, double temperature = 1.0);
Matrix log_softmax_rows(const Matrix& z, double temperature = 1.0);

void softmax_row(std::span<const double> z, std::span<double> out, double temperature = 1.0);
double log_sum_exp(std::span<const double> z, double temperature = 1.0);

// Shannon entropy (nats) of softmax(z).
double softmax_entropy(std::span<const double> z);

// ---------------------------------------------------------------------------
// Losses. Every loss returns its value and the gradient with respect to the
// (first) logits argument; rows outside the selection carry exact zeros.
// ---------------------------------------------------------------------------

struct LossGrad {
  double value = 0.0;
  Matrix grad;
};

// -sum_{t in rows} log softmax(logits[t])[targets[t]]. `rows` index into
// `targets`; an empty selection yields 0 with an all-zero gradient.
LossGrad masked_cross_entropy(const Matrix& logits, std::span<const std::int32_t> targets,
                              std::span<const std::size_t> rows);

enum class KlDirection { forward, reverse };

// Temperature-scaled KL between student and teacher row distributions,
// multiplied by tau^2 and averaged over the selected rows:
//   reverse: KL(softmax(s/tau) || softmax(t/tau))
//   forward: KL(softmax(t/tau) || softmax(s/tau))
// The gradient is taken with respect to the student logits only.
LossGrad kl_rows(const Matrix& student, const Matrix& teacher, double tau, KlDirection direction,
                 std::span<const std::size_t> rows);

// Same, over every row.
LossGrad kl_rows(const Matrix& student, const Matrix& teacher, double tau, KlDirection direction);

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttentionCache {
  Matrix weights;  // T x T post-softmax, exact zeros at hidden keys
};

// Scaled dot-product attention where key j contributes to query i only if
// mask(i, j). Throws ContractError for a query row with no visible key.
Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Visibility& mask,
                        AttentionCache* cache = nullptr);

struct AttentionGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
};

AttentionGrads masked_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         const AttentionCache& cache, const Matrix& dout);

// ---------------------------------------------------------------------------
// Layer primitives used by the talker
// ---------------------------------------------------------------------------

// x * w + b (b is 1 x out, broadcast over rows).
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);

// Accumulates dw and db, returns dx.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db);

struct LayerNormCache {
  Matrix normalized;               // (x - mean) / std
  std::vector<double> inv_stddev;  // per row
};

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache* cache,
                  double eps = 1e-5);
Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma, const Matrix& dy,
                           Matrix& dgamma, Matrix& dbeta);

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& dy);

// tanh approximation of GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

// Copy of columns [begin, begin + count).
Matrix column_slice(const Matrix& x, std::size_t begin, std::size_t count);
void add_column_slice(Matrix& dst, std::size_t begin, const Matrix& src);

}  // namespace blockmdm::nd
