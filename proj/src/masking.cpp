// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/masking.hpp"

#include <cmath>

#include "blockmdm/errors.hpp"

namespace blockmdm::masking {

BlockPartition::BlockPartition(std::size_t length, std::size_t block_size)
    : length_(length), block_size_(block_size) {
  if (length == 0 || block_size == 0) {
    throw ParameterError("partition: length and block size must be >= 1 (got T=" +
                         std::to_string(length) + ", B=" + std::to_string(block_size) + ")");
  }
  num_blocks_ = (length + block_size - 1) / block_size;
}

BlockPartition partition(std::size_t length, std::size_t block_size) {
  return BlockPartition(length, block_size);
}

std::string to_string(MaskingMode mode) {
  return mode == MaskingMode::global_bernoulli ? "global_bernoulli" : "hierarchical";
}

MaskingMode masking_mode_from_string(const std::string& name) {
  if (name == "global_bernoulli" || name == "global") return MaskingMode::global_bernoulli;
  if (name == "hierarchical") return MaskingMode::hierarchical;
  throw ParameterError("unknown masking mode '" + name + "'");
}

void MaskingConfig::validate() const {
  const auto check = [](const RatioRange& r, const char* name) {
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
      throw ParameterError(std::string("MaskingConfig: ") + name + " range [" +
                           std::to_string(r.lo) + ", " + std::to_string(r.hi) +
                           "] must satisfy 0 <= lo <= hi <= 1");
    }
  };
  check(global, "global");
  check(block, "block");
  check(token, "token");
}

GlobalDraw sample_global_draw(std::size_t length, const MaskingConfig& cfg, nd::Rng& rng) {
  GlobalDraw draw;
  draw.gamma_g = rng.uniform(cfg.global.lo, cfg.global.hi);
  for (std::size_t t = 0; t < length; ++t) {
    if (rng.uniform() < draw.gamma_g) draw.mask.push_back(t);
  }
  return draw;
}

MaskSet sample_global(std::size_t length, const MaskingConfig& cfg, nd::Rng& rng) {
  return sample_global_draw(length, cfg, rng).mask;
}

HierarchicalDraw sample_hierarchical_draw(const BlockPartition& part, const MaskingConfig& cfg,
                                          nd::Rng& rng) {
  HierarchicalDraw draw;
  const std::size_t k_blk = part.num_blocks();
  draw.gamma_c = rng.uniform(cfg.block.lo, cfg.block.hi);
  const auto m_blk = static_cast<std::size_t>(
      std::floor(draw.gamma_c * static_cast<double>(k_blk)));
  draw.selected_blocks = rng.sample_without_replacement(k_blk, std::min(m_blk, k_blk));
  std::sort(draw.selected_blocks.begin(), draw.selected_blocks.end());
  draw.gamma_t = rng.uniform(cfg.token.lo, cfg.token.hi);

  for (std::size_t k : draw.selected_blocks) {
    const std::size_t len = part.block_length(k);
    const auto floor_n = static_cast<std::size_t>(std::floor(draw.gamma_t * static_cast<double>(len)));
    const std::size_t n_k = std::min(len, std::max<std::size_t>(1, floor_n));
    auto picks = rng.sample_without_replacement(len, n_k);
    for (std::size_t offset : picks) draw.mask.push_back(part.block_begin(k) + offset);
  }
  std::sort(draw.mask.begin(), draw.mask.end());
  return draw;
}

MaskSet sample_hierarchical(const BlockPartition& part, const MaskingConfig& cfg, nd::Rng& rng) {
  return sample_hierarchical_draw(part, cfg, rng).mask;
}

MaskSet sample_mask(std::size_t valid_length, std::size_t block_size, const MaskingConfig& cfg,
                    nd::Rng& rng) {
  if (cfg.mode == MaskingMode::global_bernoulli) return sample_global(valid_length, cfg, rng);
  return sample_hierarchical(partition(valid_length, block_size), cfg, rng);
}

MaskStatsReport mask_stats(const BlockPartition& part, const MaskingConfig& cfg, nd::Rng& rng,
                           std::size_t samples, double delta) {
  if (samples < 1000) {
    throw ParameterError("mask_stats: at least 1000 samples required, got " +
                         std::to_string(samples));
  }
  cfg.validate();
  MaskStatsReport rep;
  rep.mode = cfg.mode;
  rep.samples = samples;
  rep.length = part.length();
  rep.block_size = part.block_size();
  rep.num_blocks = part.num_blocks();
  rep.delta = delta;
  rep.ratio_histogram.assign(part.block_size() + 1, 0);

  const double b = static_cast<double>(part.block_size());
  const double t_len = static_cast<double>(part.length());
  std::size_t full_blocks = 0;
  for (std::size_t k = 0; k < part.num_blocks(); ++k) {
    if (part.block_length(k) == part.block_size()) ++full_blocks;
  }

  const auto bin_of = [&](std::size_t masked, std::size_t len) {
    const double ratio = static_cast<double>(masked) / static_cast<double>(len);
    return std::min(part.block_size(), static_cast<std::size_t>(std::floor(ratio * b)));
  };

  double masked_total = 0.0;
  std::size_t tail_hits = 0;
  std::vector<std::size_t> per_block(part.num_blocks());
  for (std::size_t s = 0; s < samples; ++s) {
    std::fill(per_block.begin(), per_block.end(), 0);
    if (cfg.mode == MaskingMode::hierarchical) {
      const auto draw = sample_hierarchical_draw(part, cfg, rng);
      masked_total += static_cast<double>(draw.mask.size());
      for (std::size_t t : draw.mask) ++per_block[part.block_of(t)];
      for (std::size_t k : draw.selected_blocks) {
        const std::size_t len = part.block_length(k);
        ++rep.ratio_histogram[bin_of(per_block[k], len)];
        if (len == part.block_size() && draw.gamma_t >= 1.0 / b) {
          ++rep.full_blocks_checked;
          const double gap = draw.gamma_t - static_cast<double>(per_block[k]) / b;
          if (!(gap >= 0.0 && gap < 1.0 / b)) ++rep.quantization_violations;
        }
      }
    } else {
      const auto draw = sample_global_draw(part.length(), cfg, rng);
      masked_total += static_cast<double>(draw.mask.size());
      for (std::size_t t : draw.mask) ++per_block[part.block_of(t)];
      double worst = 0.0;
      for (std::size_t k = 0; k < part.num_blocks(); ++k) {
        const std::size_t len = part.block_length(k);
        ++rep.ratio_histogram[bin_of(per_block[k], len)];
        if (len == part.block_size()) {
          worst = std::max(worst, std::abs(static_cast<double>(per_block[k]) / b - draw.gamma_g));
        }
      }
      if (full_blocks > 0 && worst >= delta) ++tail_hits;
    }
  }
  rep.mean_fraction = masked_total / (static_cast<double>(samples) * t_len);
  if (cfg.mode == MaskingMode::hierarchical) {
    const double e_c = 0.5 * (cfg.block.lo + cfg.block.hi);
    const double e_t = 0.5 * (cfg.token.lo + cfg.token.hi);
    rep.analytic_fraction = static_cast<double>(part.num_blocks()) * e_c * b * e_t / t_len;
  } else {
    rep.analytic_fraction = 0.5 * (cfg.global.lo + cfg.global.hi);
    rep.hoeffding_tail_frequency = static_cast<double>(tail_hits) / static_cast<double>(samples);
    rep.hoeffding_bound =
        2.0 * static_cast<double>(full_blocks) * std::exp(-2.0 * b * delta * delta);
  }
  return rep;
}

}  // namespace blockmdm::masking
