// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "blockmdm/nd/rng.hpp"

namespace blockmdm::masking {

// Contiguous blocks of size B over positions [0, length); the last block may
// be shorter. Positions are 0-based throughout the library.
class BlockPartition {
 public:
  BlockPartition() = default;
  BlockPartition(std::size_t length, std::size_t block_size);

  std::size_t length() const noexcept { return length_; }
  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t num_blocks() const noexcept { return num_blocks_; }

  std::size_t block_begin(std::size_t k) const noexcept { return k * block_size_; }
  std::size_t block_end(std::size_t k) const noexcept {
    return std::min(length_, (k + 1) * block_size_);
  }
  std::size_t block_length(std::size_t k) const noexcept { return block_end(k) - block_begin(k); }
  std::size_t block_of(std::size_t t) const noexcept { return t / block_size_; }

 private:
  std::size_t length_ = 0;
  std::size_t block_size_ = 1;
  std::size_t num_blocks_ = 0;
};

// Throws ParameterError for zero length or block size.
BlockPartition partition(std::size_t length, std::size_t block_size);

struct RatioRange {
  double lo = 0.0;
  double hi = 0.0;
};

enum class MaskingMode { global_bernoulli, hierarchical };

std::string to_string(MaskingMode mode);
MaskingMode masking_mode_from_string(const std::string& name);

struct MaskingConfig {
  MaskingMode mode = MaskingMode::global_bernoulli;
  RatioRange global{0.3, 0.8};  // gamma_g
  RatioRange block{0.5, 1.0};   // gamma_c
  RatioRange token{0.3, 1.0};   // gamma_t

  // Each range inside [0, 1] with lo <= hi.
  void validate() const;
};

// Sorted, duplicate-free masked positions.
using MaskSet = std::vector<std::size_t>;

struct GlobalDraw {
  double gamma_g = 0.0;
  MaskSet mask;
};

struct HierarchicalDraw {
  double gamma_c = 0.0;
  double gamma_t = 0.0;
  std::vector<std::size_t> selected_blocks;  // sorted
  MaskSet mask;
};

// Global Bernoulli masking over [0, length): one ratio drawn from the global
// range, then every position masked independently with that probability.
GlobalDraw sample_global_draw(std::size_t length, const MaskingConfig& cfg, nd::Rng& rng);
MaskSet sample_global(std::size_t length, const MaskingConfig& cfg, nd::Rng& rng);

// Hierarchical block-wise sampler:
//   gamma_c ~ U(block), M = floor(gamma_c * K) blocks chosen without
//   replacement, one shared gamma_t ~ U(token), and in each chosen block
//   n_k = max(1, floor(gamma_t * |I_k|)) positions without replacement.
HierarchicalDraw sample_hierarchical_draw(const BlockPartition& part, const MaskingConfig& cfg,
                                          nd::Rng& rng);
MaskSet sample_hierarchical(const BlockPartition& part, const MaskingConfig& cfg, nd::Rng& rng);

// Dispatches on cfg.mode. Positions at or beyond `valid_length` (PAD in
// batched sequences) are never masked: the partition covers only the valid
// prefix.
MaskSet sample_mask(std::size_t valid_length, std::size_t block_size, const MaskingConfig& cfg,
                    nd::Rng& rng);

struct MaskStatsReport {
  MaskingMode mode = MaskingMode::global_bernoulli;
  std::size_t samples = 0;
  std::size_t length = 0;
  std::size_t block_size = 0;
  std::size_t num_blocks = 0;

  double mean_fraction = 0.0;      // empirical E|M| / T
  double analytic_fraction = 0.0;  // K * E[gamma_c] * B * E[gamma_t] / T, or E[gamma_g]

  // Histogram of the per-block ratio R_k = |M ∩ I_k| / |I_k| over selected
  // (hierarchical) or all (global) blocks; B + 1 bins, bin b counts
  // floor(R_k * B) == b.
  std::vector<std::size_t> ratio_histogram;

  // Hierarchical only: 0 <= gamma_t - R_k < 1/B on selected full blocks,
  // checked whenever gamma_t >= 1/B.
  std::size_t full_blocks_checked = 0;
  std::size_t quantization_violations = 0;

  // Global only: frequency of max_k |R_k - gamma_g| >= delta over equal-length
  // blocks, against 2 K exp(-2 B delta^2).
  double delta = 0.2;
  double hoeffding_tail_frequency = 0.0;
  double hoeffding_bound = 0.0;
};

// Throws ParameterError when samples < 1000.
MaskStatsReport mask_stats(const BlockPartition& part, const MaskingConfig& cfg, nd::Rng& rng,
                           std::size_t samples, double delta = 0.2);

}  // namespace blockmdm::masking
