// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "blockmdm/masking.hpp"
#include "blockmdm/nd/matrix.hpp"
#include "blockmdm/nd/optim.hpp"

namespace blockmdm::semantics {

// N x d conditioning vectors, one per source unit.
struct SemanticStates {
  nd::Matrix h;
  std::size_t count() const noexcept { return h.rows(); }
  std::size_t width() const noexcept { return h.cols(); }
};

// Sparse T x d stream: row a_m carries h_m for m < min(N, |A|); all other
// rows are zero.
struct AlignedSemantics {
  nd::Matrix h_prime;
  std::vector<std::size_t> anchors;  // sorted anchor positions
  // source_row[m] = index into h assigned to anchors[m], or nullopt when the
  // anchor received zero (m >= N).
  std::vector<std::optional<std::size_t>> source_row;
  std::size_t dropped = 0;  // semantic rows that found no anchor

  std::size_t length() const noexcept { return h_prime.rows(); }
  std::size_t width() const noexcept { return h_prime.cols(); }
};

// First Q positions of every block, clipped to the block's extent, ascending.
// Throws ParameterError unless 1 <= Q <= B.
std::vector<std::size_t> build_anchors(const masking::BlockPartition& part, std::size_t q);

// Order-preserving assignment of h rows to anchors. Surplus rows beyond the
// anchor count are dropped with a warning on stderr.
AlignedSemantics align(const SemanticStates& states, const std::vector<std::size_t>& anchors,
                       std::size_t length);

// Scatters a gradient with respect to h' back onto h (N x d).
nd::Matrix align_backward(const AlignedSemantics& aligned, const nd::Matrix& grad_h_prime,
                          std::size_t source_count);

// Two-layer fusion e = ReLU((E + h') W1 + b1) W2 + b2, applied per row.
struct FusionParams {
  nd::Param w1;  // d x d_ff
  nd::Param b1;  // 1 x d_ff
  nd::Param w2;  // d_ff x d
  nd::Param b2;  // 1 x d

  FusionParams() = default;
  FusionParams(std::size_t width, std::size_t hidden);
  std::size_t width() const noexcept { return w1.value.rows(); }
  std::size_t hidden() const noexcept { return w1.value.cols(); }
};

struct FusionCache {
  nd::Matrix input;       // E + h'
  nd::Matrix pre_relu;    // input W1 + b1
  nd::Matrix activation;  // ReLU(pre_relu)
};

// Throws DimensionError on width mismatch. Only the first tok_emb.rows()
// rows of h' are used, so a longer conditioning canvas is accepted.
nd::Matrix fuse(const nd::Matrix& tok_emb, const nd::Matrix& h_prime, const FusionParams& fp,
                FusionCache* cache = nullptr);

// Accumulates parameter gradients into fp and returns d(E + h'), which is
// the gradient for both addends.
nd::Matrix fuse_backward(const FusionCache& cache, FusionParams& fp, const nd::Matrix& dout);

}  // namespace blockmdm::semantics
