// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace blockmdm::nd {

// Platform-stable pseudo random stream.
//
// The generator is xoshiro256** whose 256-bit state is expanded from the
// 64-bit seed with SplitMix64. All derived draws are defined here rather
// than through <random> distributions, whose algorithms are
// implementation-defined:
//   uniform()   = (next_u64() >> 11) * 2^-53            in [0, 1)
//   below(n)    = Lemire multiply-shift with rejection   in [0, n)
//   normal()    = Box-Muller on two uniform() draws (cosine branch only)
// position() counts raw 64-bit draws since construction.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Uniformly random k-subset of {0, .., n-1} (partial Fisher-Yates), in
  // selection order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  // Uniform permutation of {0, .., n-1}.
  std::vector<std::size_t> permutation(std::size_t n);

  // Independent generator for a named sub-stream; does not advance *this.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace blockmdm::nd
