// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "blockmdm/diffusion_train.hpp"
#include "blockmdm/errors.hpp"
#include "blockmdm/talker.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace blockmdm;
using talker::Talker;
using talker::TalkerConfig;

namespace {

TalkerConfig small_config() {
  TalkerConfig c;
  c.layers = 2;
  c.heads = 2;
  c.width = 16;
  c.ff_width = 32;
  c.fusion_width = 32;
  c.vocab.data_size = 12;
  c.block_size = 4;
  c.anchors_per_block = 2;
  c.max_len = 32;
  c.source_vocab = 6;
  return c;
}

Talker random_talker(const TalkerConfig& c, std::uint64_t seed) {
  Talker t(c);
  nd::Rng rng(seed);
  t.init(rng, false);
  return t;
}

TokenSequence random_tokens(std::size_t n, const Vocabulary& v, nd::Rng& rng) {
  TokenSequence s(n);
  for (auto& x : s) x = static_cast<Token>(rng.below(static_cast<std::uint64_t>(v.size())));
  return s;
}

}  // namespace

TEST_SUITE("block causal mask") {
  TEST_CASE("B=1 is causal") {
    const auto m = talker::build_block_causal_mask(5, 1);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) CHECK(m(i, j) == (j <= i));
    }
  }

  TEST_CASE("B=T is all visible") {
    const auto m = talker::build_block_causal_mask(6, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) CHECK(m(i, j));
    }
  }

  TEST_CASE("T=4, B=2") {
    const auto m = talker::build_block_causal_mask(4, 2);
    const bool expect[4][4] = {{1, 1, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 1, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(m(i, j) == expect[i][j]);
    }
  }
}

TEST_SUITE("talker forward") {
  TEST_CASE("zero head gives uniform predictions") {
    const auto c = small_config();
    Talker t(c);
    nd::Rng rng(1);
    t.init(rng, true);
    const TokenSequence src{1, 2, 3};
    const TokenSequence toks(8, c.vocab.mask());
    const nd::Matrix z = t.forward(toks, t.condition(src, 8));
    CHECK(z.all_finite());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      CHECK(train::confidence(z.row(r)) == doctest::Approx(1.0 / static_cast<double>(c.vocab.size())));
    }
  }

  TEST_CASE("fully masked input yields finite logits") {
    const auto c = small_config();
    const Talker t = random_talker(c, 2);
    const nd::Matrix z = t.forward(TokenSequence(32, c.vocab.mask()), t.condition(TokenSequence{0, 5}, 32));
    CHECK(z.rows() == 32);
    CHECK(z.cols() == c.vocab.size());
    CHECK(z.all_finite());
  }

  TEST_CASE("out-of-range ids and over-long input are input errors") {
    const auto c = small_config();
    const Talker t = random_talker(c, 3);
    const auto cond = t.condition(TokenSequence{0}, 32);
    TokenSequence bad(4, 0);
    bad[2] = static_cast<Token>(c.vocab.size());
    CHECK_THROWS_AS(t.forward(bad, cond), InputError);
    CHECK_THROWS_AS(t.forward(TokenSequence(33, 0), t.condition(TokenSequence{0}, 33)), InputError);
    CHECK_THROWS_AS(t.condition(TokenSequence{6}, 8), InputError);
  }

  TEST_CASE("blocks up to k ignore any change in later blocks") {
    const auto c = small_config();
    const Talker t = random_talker(c, 4);
    nd::Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t len = 4 * (2 + rng.below(5));
      TokenSequence src(1 + rng.below(6));
      for (auto& s : src) s = static_cast<Token>(rng.below(c.source_vocab));
      const auto cond = t.condition(src, len);
      TokenSequence a = random_tokens(len, c.vocab, rng);
      const std::size_t k = rng.below(len / 4 - 1);
      TokenSequence b = a;
      for (std::size_t p = 4 * (k + 1); p < len; ++p) {
        if (rng.bernoulli(0.5)) b[p] = static_cast<Token>(rng.below(c.vocab.size()));
      }
      const nd::Matrix za = t.forward(a, cond), zb = t.forward(b, cond);
      for (std::size_t r = 0; r < 4 * (k + 1); ++r) {
        for (std::size_t col = 0; col < za.cols(); ++col) CHECK(za(r, col) == zb(r, col));
      }
    }
  }

  TEST_CASE("attention is bidirectional inside a block") {
    const auto c = small_config();
    const Talker t = random_talker(c, 6);
    const auto cond = t.condition(TokenSequence{1, 2}, 8);
    TokenSequence a{1, 2, 3, 4, 5, 6, 7, 8};
    TokenSequence b = a;
    b[3] = 9;  // last position of block 0
    const nd::Matrix za = t.forward(a, cond), zb = t.forward(b, cond);
    CHECK(za(0, 0) != zb(0, 0));
  }

  TEST_CASE("parameter shapes follow the config") {
    const auto c = small_config();
    Talker a(c), b(c);
    CHECK(a.parameter_count() == b.parameter_count());
    const std::size_t d = c.width, v = c.vocab.size();
    std::size_t expect = v * d + c.max_len * d + c.source_vocab * d +
                         (d * c.fusion_width + c.fusion_width + c.fusion_width * d + d) +
                         c.layers * (4 * d + 4 * (d * d + d) + d * c.ff_width + c.ff_width +
                                     c.ff_width * d + d) +
                         2 * d + d * v + v;
    CHECK(a.parameter_count() == expect);
    CHECK(a.params().front()->name == "tok_emb");
    CHECK(a.params().back()->name == "head.b");
  }

  TEST_CASE("copies are independent") {
    const auto c = small_config();
    Talker a = random_talker(c, 7);
    Talker b = a;
    CHECK(a.checksum() == b.checksum());
    b.params()[0]->value(0, 0) += 1.0;
    CHECK(a.checksum() != b.checksum());
    Talker moved = std::move(b);
    CHECK(moved.params()[0]->value(0, 0) == a.params()[0]->value(0, 0) + 1.0);
  }

  TEST_CASE("small talker gradients match finite differences") {
    const auto c = small_config();
    Talker t = random_talker(c, 8);
    nd::Rng rng(9);
    const TokenSequence src{2, 4, 1};
    const std::size_t len = 12;
    TokenSequence clean(len);
    for (auto& x : clean) x = static_cast<Token>(rng.below(c.vocab.data_size));
    TokenSequence input = clean;
    masking::MaskSet mask{1, 2, 5, 9, 10, 11};
    for (auto p : mask) input[p] = c.vocab.mask();
    const nd::LossClosure loss = [&](bool g) {
      talker::ForwardCache cache;
      const auto z = t.forward(input, t.condition(src, len), g ? &cache : nullptr);
      const auto ce = nd::masked_cross_entropy(z, clean, mask);
      if (g) {
        t.zero_grad();
        t.backward(cache, ce.grad);
      }
      return ce.value;
    };
    auto params = t.params();
    nd::Rng pick(3);
    const auto rep = nd::grad_check(loss, params, 1e-5, 40, pick, 1e-3);
    CHECK(rep.max_rel_error < 1e-5);
    CHECK(rep.nonzero_analytic > rep.checked / 2);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is exact") {
    const auto c = small_config();
    const Talker t = random_talker(c, 10);
    std::stringstream ss;
    talker::save_checkpoint(t, ss);
    const Talker u = talker::load_checkpoint(ss);
    CHECK(u.config() == c);
    CHECK(u.checksum() == t.checksum());
    const auto cond = t.condition(TokenSequence{1, 2}, 8);
    const TokenSequence toks{0, 1, 2, 3, 4, 5, 6, 7};
    CHECK(t.forward(toks, cond) == u.forward(toks, u.condition(TokenSequence{1, 2}, 8)));
  }

  TEST_CASE("header starts with the magic and version") {
    std::stringstream ss;
    talker::save_checkpoint(random_talker(small_config(), 11), ss);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 8) == "BMDMCKPT");
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  }

  TEST_CASE("corrupt or truncated files are load errors") {
    std::stringstream bad("NOTACKPT........");
    CHECK_THROWS_AS(talker::load_checkpoint(bad), LoadError);
    std::stringstream ss;
    talker::save_checkpoint(random_talker(small_config(), 12), ss);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(talker::load_checkpoint(cut), LoadError);
    CHECK_THROWS_AS(talker::load_checkpoint(std::filesystem::path("/nonexistent/ckpt.bin")),
                    LoadError);
  }

  TEST_CASE("compatibility check names the differing fields") {
    auto a = small_config();
    auto b = a;
    b.width = 32;
    b.heads = 4;
    b.block_size = 8;
    try {
      talker::require_compatible(a, b, "test");
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("d ") != std::string::npos);
      CHECK(msg.find("B ") != std::string::npos);
    }
    CHECK_NOTHROW(talker::require_compatible(a, a, "same"));
  }
}
