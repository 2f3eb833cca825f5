// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <set>
#include <sstream>

#include "blockmdm/synthtask.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace blockmdm;
using namespace blockmdm::synth;

namespace {

TaskSpec small_spec(double noise = 0.0) {
  TaskSpec s;
  s.source_vocab = 16;
  s.vocab.data_size = 64;
  s.upsample = 4;
  s.grammar_seed = 3;
  s.noise = noise;
  return s;
}

}  // namespace

TEST_SUITE("grammar") {
  TEST_CASE("same seed gives the same grammar") {
    const auto a = gen_grammar(small_spec());
    const auto b = gen_grammar(small_spec());
    CHECK(a.fragments == b.fragments);
    auto other = small_spec();
    other.grammar_seed = 4;
    CHECK(gen_grammar(other).fragments != a.fragments);
  }

  TEST_CASE("fragments have length U, hold data tokens and are distinct") {
    const auto spec = small_spec();
    const auto g = gen_grammar(spec);
    REQUIRE(g.fragments.size() == spec.source_vocab);
    std::set<TokenSequence> unique;
    for (const auto& f : g.fragments) {
      CHECK(f.size() == spec.upsample);
      for (Token t : f) CHECK(spec.vocab.is_data(t));
      unique.insert(f);
    }
    CHECK(unique.size() == spec.source_vocab);
  }

  TEST_CASE("expand concatenates fragments and appends EOS") {
    const auto spec = small_spec();
    const auto g = gen_grammar(spec);
    const TokenSequence src{2, 0, 2};
    const auto out = g.expand(src, spec.vocab.eos());
    REQUIRE(out.size() == 13);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t u = 0; u < 4; ++u) {
        CHECK(out[i * 4 + u] == g.fragments[static_cast<std::size_t>(src[i])][u]);
      }
    }
    CHECK(out.back() == spec.vocab.eos());
  }

  TEST_CASE("spec validation") {
    auto s = small_spec();
    s.noise = 0.5;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = small_spec();
    s.upsample = 0;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = small_spec();
    s.noise = -0.1;
    CHECK_THROWS_AS(s.validate(), ParameterError);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("bit-reproducible per seed") {
    nd::Rng a(0), b(0);
    const auto x = gen_dataset(small_spec(0.1), 1000, 4, 12, a);
    const auto y = gen_dataset(small_spec(0.1), 1000, 4, 12, b);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x[i].source == y[i].source);
      CHECK(x[i].target == y[i].target);
    }
  }

  TEST_CASE("lengths, EOS termination and noise-free determinism") {
    const auto spec = small_spec();
    const auto g = gen_grammar(spec);
    nd::Rng rng(5);
    const auto data = gen_dataset(spec, 500, 4, 12, rng);
    std::set<std::size_t> lengths;
    for (const auto& p : data) {
      CHECK(p.source.size() >= 4);
      CHECK(p.source.size() <= 12);
      lengths.insert(p.source.size());
      CHECK(p.target.size() == 4 * p.source.size() + 1);
      CHECK(p.target.back() == spec.vocab.eos());
      CHECK(p.target == g.expand(p.source, spec.vocab.eos()));
    }
    CHECK(lengths.size() == 9);
  }

  TEST_CASE("sources are uniform over the source vocabulary") {
    const auto spec = small_spec();
    nd::Rng rng(9);
    const auto data = gen_dataset(spec, 4000, 8, 8, rng);
    std::vector<double> counts(spec.source_vocab, 0.0);
    for (const auto& p : data) {
      for (Token s : p.source) counts[static_cast<std::size_t>(s)] += 1.0;
    }
    const double expected = 4000.0 * 8.0 / 16.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 15 degrees of freedom; the 0.999 quantile is about 37.7.
    CHECK(chi2 < 37.7);
  }

  TEST_CASE("grammar oracle error on noisy output matches the noise rate") {
    for (double rho : {0.0, 0.1, 0.3}) {
      const auto spec = small_spec(rho);
      const auto g = gen_grammar(spec);
      nd::Rng rng(11);
      const auto data = gen_dataset(spec, 10000, 4, 12, rng);
      std::size_t edits = 0, ref_len = 0;
      for (const auto& p : data) {
        const TokenSequence clean = g.expand(p.source, spec.vocab.eos());
        edits += oracle::levenshtein(clean, p.target);
        ref_len += p.target.size() - 1;
      }
      const double rate = static_cast<double>(edits) / static_cast<double>(ref_len);
      CAPTURE(rho);
      CHECK(std::abs(rate - rho) <= 0.02);
    }
  }

  TEST_CASE("invalid arguments") {
    nd::Rng rng(0);
    CHECK_THROWS_AS(gen_dataset(small_spec(), 0, 4, 12, rng), ParameterError);
    CHECK_THROWS_AS(gen_dataset(small_spec(), 10, 0, 12, rng), ParameterError);
    CHECK_THROWS_AS(gen_dataset(small_spec(), 10, 5, 4, rng), ParameterError);
  }
}

TEST_SUITE("token error rate") {
  TEST_CASE("identical and single substitution") {
    const TokenSequence ref{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(token_error_rate(ref, ref).rate == 0.0);
    TokenSequence hyp = ref;
    hyp[4] = 40;
    const auto r = token_error_rate(hyp, ref);
    CHECK(r.rate == doctest::Approx(0.1));
    CHECK(r.edits == 1);
    CHECK(r.ref_length == 10);
  }

  TEST_CASE("three-token case against the oracle") {
    const TokenSequence a{0, 1, 2}, b{0, 23, 2};
    CHECK(edit_distance(a, b) == 1);
    CHECK(edit_distance(a, b) == oracle::levenshtein(a, b));
  }

  TEST_CASE("random pairs agree with the oracle") {
    nd::Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
      TokenSequence a(rng.below(12)), b(rng.below(12));
      for (auto& t : a) t = static_cast<Token>(rng.below(4));
      for (auto& t : b) t = static_cast<Token>(rng.below(4));
      CHECK(edit_distance(a, b) == oracle::levenshtein(a, b));
      CHECK(edit_distance(a, b) == edit_distance(b, a));
    }
  }

  TEST_CASE("rate may exceed one and empty references are flagged") {
    const TokenSequence ref{1}, hyp{2, 3, 4};
    CHECK(token_error_rate(hyp, ref).rate == doctest::Approx(3.0));
    const auto e = token_error_rate(hyp, TokenSequence{});
    CHECK(e.empty_reference);
    CHECK(e.rate == doctest::Approx(3.0));
    CHECK(token_error_rate(TokenSequence{}, TokenSequence{}).rate == 0.0);
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("write then read is lossless") {
    Corpus c;
    c.spec = small_spec(0.125);
    nd::Rng rng(2);
    c.samples = gen_dataset(c.spec, 50, 1, 6, rng);
    std::stringstream ss;
    write_corpus(c, ss);
    const Corpus back = read_corpus(ss);
    CHECK(back.spec.source_vocab == c.spec.source_vocab);
    CHECK(back.spec.vocab.data_size == c.spec.vocab.data_size);
    CHECK(back.spec.upsample == c.spec.upsample);
    CHECK(back.spec.grammar_seed == c.spec.grammar_seed);
    CHECK(back.spec.noise == c.spec.noise);
    REQUIRE(back.samples.size() == c.samples.size());
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      CHECK(back.samples[i].source == c.samples[i].source);
      CHECK(back.samples[i].target == c.samples[i].target);
    }
  }

  TEST_CASE("record layout") {
    Corpus c;
    c.spec = small_spec();
    c.samples.push_back({{3, 1}, {7, 65}});
    std::stringstream ss;
    write_corpus(c, ss);
    CHECK(ss.str() ==
          "# blockmdm-corpus v1 source_vocab=16 data_vocab=64 upsample=4 grammar_seed=3 "
          "noise=0 count=1\n3\n1\n\n7\n65\n\n");
  }

  TEST_CASE("malformed input is rejected") {
    std::stringstream no_header("1\n\n2\n\n");
    CHECK_THROWS_AS(read_corpus(no_header), InputError);
    std::stringstream bad_id("# blockmdm-corpus v1 count=1\n1\nx\n\n2\n\n");
    CHECK_THROWS_AS(read_corpus(bad_id), InputError);
    std::stringstream bad_count("# blockmdm-corpus v1 count=2\n1\n\n2\n\n");
    CHECK_THROWS_AS(read_corpus(bad_count), InputError);
    CHECK_THROWS_AS(read_corpus(std::filesystem::path("/nonexistent/corpus.txt")), LoadError);
  }
}
