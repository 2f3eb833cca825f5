// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <set>

#include "blockmdm/blockdecode.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace blockmdm;
using namespace blockmdm::decode;
using blockmdm::nd::Matrix;

namespace {

Vocabulary small_vocab() {
  Vocabulary v;
  v.data_size = 8;
  return v;
}

// Position t predicts (t * 3) % D with confidence rising with t % 5; EOS wins
// from `eos_at` onwards.
struct PatternModel {
  Vocabulary vocab;
  std::size_t eos_at = std::numeric_limits<std::size_t>::max();
  std::size_t* calls = nullptr;
  Matrix operator()(std::span<const Token> seq) const {
    if (calls) ++*calls;
    Matrix z(seq.size(), vocab.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const double peak = 2.0 + 0.5 * static_cast<double>(t % 5);
      if (t >= eos_at) {
        z(t, static_cast<std::size_t>(vocab.eos())) = peak;
      } else {
        z(t, (t * 3) % static_cast<std::size_t>(vocab.data_size)) = peak;
      }
      z(t, static_cast<std::size_t>(vocab.mask())) = -30.0;
    }
    return z;
  }
};

talker::TalkerConfig ar_config() {
  talker::TalkerConfig c;
  c.layers = 2;
  c.heads = 2;
  c.width = 16;
  c.ff_width = 32;
  c.fusion_width = 32;
  c.vocab.data_size = 10;
  c.block_size = 1;
  c.anchors_per_block = 1;
  c.max_len = 24;
  c.source_vocab = 6;
  return c;
}

}  // namespace

TEST_SUITE("decode block") {
  TEST_CASE("K forward passes and the even schedule") {
    const auto v = small_vocab();
    for (std::size_t k : {1u, 2u, 3u, 4u, 8u}) {
      std::size_t calls = 0;
      PatternModel pm{v, std::numeric_limits<std::size_t>::max(), &calls};
      DecodeConfig cfg;
      cfg.block_size = 8;
      cfg.steps = k;
      BlockTrace bt;
      const TokenSequence prefix(8, 1);
      const auto block = decode_block(prefix, 8, pm, cfg, v, bt);
      CHECK(calls == k);
      CHECK(bt.forward_passes == k);
      REQUIRE(bt.steps.size() == k);
      const auto expect = oracle::schedule_trace(8, k);
      std::set<std::size_t> seen;
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(bt.steps[j].revealed.size() == expect[j]);
        for (auto t : bt.steps[j].revealed) {
          CHECK(t >= 8);
          CHECK(t < 16);
          CHECK(seen.insert(t).second);
        }
      }
      CHECK(seen.size() == 8);
      CHECK(bt.revealed_count() == 8);
      for (std::size_t i = 0; i < 8; ++i) CHECK(block[i] == static_cast<Token>(((8 + i) * 3) % 8));
    }
  }

  TEST_CASE("most confident positions are revealed first") {
    const auto v = small_vocab();
    PatternModel pm{v};
    DecodeConfig cfg;
    cfg.block_size = 4;
    cfg.steps = 4;
    BlockTrace bt;
    decode_block({}, 4, pm, cfg, v, bt);
    // Confidence rises with t % 5 over positions 0..3.
    CHECK(bt.steps[0].revealed == std::vector<std::size_t>{3});
    CHECK(bt.steps[1].revealed == std::vector<std::size_t>{2});
    CHECK(bt.steps[2].revealed == std::vector<std::size_t>{1});
    CHECK(bt.steps[3].revealed == std::vector<std::size_t>{0});
  }

  TEST_CASE("uniform logits give confidence 1/V and entropy ln V") {
    const auto v = small_vocab();
    const train::LogitsFn uniform = [&](std::span<const Token> s) {
      return Matrix(s.size(), v.size());
    };
    DecodeConfig cfg;
    cfg.block_size = 4;
    cfg.steps = 2;
    BlockTrace bt;
    const auto block = decode_block({}, 4, uniform, cfg, v, bt);
    for (const auto& s : bt.steps) {
      for (std::size_t i = 0; i < s.revealed.size(); ++i) {
        CHECK(s.confidences[i] == doctest::Approx(1.0 / static_cast<double>(v.size())));
        CHECK(s.entropies[i] == doctest::Approx(std::log(static_cast<double>(v.size()))));
      }
    }
    // Ties go to the lowest id, which is data token 0.
    for (Token t : block) CHECK(t == 0);
  }

  TEST_CASE("MASK and PAD are never revealed") {
    const auto v = small_vocab();
    const train::LogitsFn special = [&](std::span<const Token> s) {
      Matrix z(s.size(), v.size());
      for (std::size_t t = 0; t < s.size(); ++t) {
        z(t, static_cast<std::size_t>(v.mask())) = 10.0;
        z(t, static_cast<std::size_t>(v.pad())) = 9.0;
        z(t, 5) = 1.0;
      }
      return z;
    };
    DecodeConfig cfg;
    cfg.block_size = 4;
    cfg.steps = 2;
    BlockTrace bt;
    for (Token t : decode_block({}, 4, special, cfg, v, bt)) CHECK(t == 5);
  }

  TEST_CASE("contract and parameter errors") {
    const auto v = small_vocab();
    PatternModel pm{v};
    DecodeConfig cfg;
    cfg.block_size = 4;
    BlockTrace bt;
    CHECK_THROWS_AS(decode_block(TokenSequence(3, 0), 4, pm, cfg, v, bt), ContractError);
    CHECK_THROWS_AS(decode_block({}, 5, pm, cfg, v, bt), ParameterError);
    cfg.steps = 0;
    CHECK_THROWS_AS(decode_block({}, 4, pm, cfg, v, bt), ParameterError);
    DecodeConfig bad;
    bad.max_blocks = 0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
  }

  TEST_CASE("wrong logits shape is a dimension error") {
    const auto v = small_vocab();
    const train::LogitsFn wrong = [&](std::span<const Token> s) {
      return Matrix(s.size(), v.size() - 1);
    };
    DecodeConfig cfg;
    cfg.block_size = 4;
    BlockTrace bt;
    CHECK_THROWS_AS(decode_block({}, 4, wrong, cfg, v, bt), DimensionError);
  }
}

TEST_SUITE("decode stream") {
  TEST_CASE("EOS truncates at the end of its block") {
    const auto v = small_vocab();
    PatternModel pm{v, 6};
    DecodeConfig cfg;
    cfg.block_size = 4;
    cfg.steps = 2;
    cfg.max_blocks = 5;
    cfg.eos = v.eos();
    std::vector<std::size_t> seen_blocks;
    const auto res = decode_stream(pm, cfg, v, [&](std::span<const Token> block, const BlockTrace& bt) {
      CHECK(block.size() == 4);
      seen_blocks.push_back(bt.index);
    });
    CHECK(res.ended_with_eos);
    CHECK_FALSE(res.truncated_by_limit);
    CHECK(res.trace.blocks.size() == 2);
    CHECK(seen_blocks == std::vector<std::size_t>{0, 1});
    REQUIRE(res.tokens.size() == 6);
    for (std::size_t t = 0; t < 6; ++t) CHECK(res.tokens[t] == static_cast<Token>((t * 3) % 8));
    CHECK(res.trace.forward_passes == 4);
  }

  TEST_CASE("no EOS stops at the block limit") {
    const auto v = small_vocab();
    PatternModel pm{v};
    DecodeConfig cfg;
    cfg.block_size = 4;
    cfg.steps = 3;
    cfg.max_blocks = 3;
    cfg.eos = v.eos();
    const auto res = decode_stream(pm, cfg, v);
    CHECK_FALSE(res.ended_with_eos);
    CHECK(res.truncated_by_limit);
    CHECK(res.tokens.size() == 12);
    CHECK(res.trace.forward_passes == 9);
    for (const auto& b : res.trace.blocks) {
      CHECK(b.forward_passes == 3);
      CHECK(b.begin == 4 * b.index);
      CHECK(b.end_seconds >= b.start_seconds);
    }
  }

  TEST_CASE("later blocks see the finished prefix") {
    const auto v = small_vocab();
    std::vector<TokenSequence> inputs;
    const train::LogitsFn spy = [&](std::span<const Token> s) {
      inputs.emplace_back(s.begin(), s.end());
      return PatternModel{v}(s);
    };
    DecodeConfig cfg;
    cfg.block_size = 2;
    cfg.steps = 1;
    cfg.max_blocks = 3;
    cfg.eos = v.eos();
    const auto res = decode_stream(spy, cfg, v);
    REQUIRE(inputs.size() == 3);
    CHECK(inputs[0] == TokenSequence{v.mask(), v.mask()});
    CHECK(inputs[2] == TokenSequence{res.tokens[0], res.tokens[1], res.tokens[2], res.tokens[3],
                                     v.mask(), v.mask()});
  }

  TEST_CASE("non-finite logits raise DecodeError with the partial trace") {
    const auto v = small_vocab();
    std::size_t calls = 0;
    const train::LogitsFn bad = [&](std::span<const Token> s) {
      Matrix z = PatternModel{v}(s);
      if (++calls == 3) z(s.size() - 1, 0) = std::nan("");
      return z;
    };
    DecodeConfig cfg;
    cfg.block_size = 2;
    cfg.steps = 2;
    cfg.max_blocks = 4;
    cfg.eos = v.eos();
    try {
      decode_stream(bad, cfg, v);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.trace().blocks.size() == 2);
      CHECK(e.trace().blocks[0].forward_passes == 2);
      CHECK(e.trace().blocks[1].forward_passes == 1);
    }
  }
}

TEST_SUITE("decode talker") {
  TEST_CASE("B=1, K=1 equals greedy autoregressive decoding") {
    const auto c = ar_config();
    const std::size_t max_blocks = 20;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      talker::Talker model(c);
      nd::Rng rng(seed);
      model.init(rng, false);
      TokenSequence src(1 + rng.below(5));
      for (auto& s : src) s = static_cast<Token>(rng.below(c.source_vocab));

      DecodeConfig cfg;
      cfg.block_size = 1;
      cfg.steps = 1;
      cfg.max_blocks = max_blocks;
      cfg.eos = c.vocab.eos();
      const auto res = decode_talker(model, src, cfg);

      // Independent greedy loop: predict the next token from the prefix plus
      // one masked slot, over data tokens and EOS only.
      const auto cond = model.condition(src, max_blocks);
      TokenSequence ar;
      bool eos = false;
      for (std::size_t t = 0; t < max_blocks; ++t) {
        TokenSequence seq = ar;
        seq.push_back(c.vocab.mask());
        const Matrix z = model.forward(seq, cond);
        Token best = 0;
        for (Token k = 1; k <= c.vocab.eos(); ++k) {
          if (k == c.vocab.mask()) continue;
          if (z(t, static_cast<std::size_t>(k)) > z(t, static_cast<std::size_t>(best))) best = k;
        }
        if (best == c.vocab.eos()) {
          eos = true;
          break;
        }
        ar.push_back(best);
      }
      CAPTURE(seed);
      CHECK(res.tokens == ar);
      CHECK(res.ended_with_eos == eos);
    }
  }

  TEST_CASE("configuration must match the checkpoint") {
    auto c = ar_config();
    c.block_size = 4;
    c.anchors_per_block = 2;
    c.max_len = 16;
    talker::Talker model(c);
    nd::Rng rng(0);
    model.init(rng);
    DecodeConfig cfg;
    cfg.eos = c.vocab.eos();
    cfg.block_size = 2;
    cfg.max_blocks = 2;
    CHECK_THROWS_AS(decode_talker(model, TokenSequence{1}, cfg), ParameterError);
    cfg.block_size = 4;
    cfg.max_blocks = 5;
    CHECK_THROWS_AS(decode_talker(model, TokenSequence{1}, cfg), ParameterError);
    cfg.max_blocks = 4;
    cfg.steps = 0;
    CHECK_THROWS_AS(decode_talker(model, TokenSequence{1}, cfg), ParameterError);
    cfg.steps = 2;
    const auto res = decode_talker(model, TokenSequence{1}, cfg);
    CHECK(res.trace.forward_passes == 2 * res.trace.blocks.size());
  }
}
