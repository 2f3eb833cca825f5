// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "blockmdm/errors.hpp"

namespace blockmdm {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

// Data tokens occupy [0, data_size); MASK, EOS and PAD follow in that order.
struct Vocabulary {
  std::int32_t data_size = 64;

  Token mask() const noexcept { return data_size; }
  Token eos() const noexcept { return data_size + 1; }
  Token pad() const noexcept { return data_size + 2; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_size) + 3; }

  bool is_data(Token t) const noexcept { return t >= 0 && t < data_size; }
  bool in_range(Token t) const noexcept { return t >= 0 && static_cast<std::size_t>(t) < size(); }
  // Tokens a decoder may reveal: data tokens and EOS.
  bool is_emittable(Token t) const noexcept { return is_data(t) || t == eos(); }

  void validate() const {
    if (data_size < 1) throw ParameterError("Vocabulary: data_size must be >= 1");
  }
};

}  // namespace blockmdm
