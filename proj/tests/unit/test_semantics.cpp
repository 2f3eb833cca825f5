// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/errors.hpp"
#include "blockmdm/nd/ops.hpp"
#include "blockmdm/semantics.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace blockmdm;
using namespace blockmdm::semantics;
using nd::Matrix;

namespace {

SemanticStates states(std::size_t n, std::size_t d) {
  SemanticStates s{Matrix(n, d)};
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t c = 0; c < d; ++c) s.h(m, c) = static_cast<double>(100 * (m + 1) + c);
  }
  return s;
}

bool row_is_zero(const Matrix& m, std::size_t r) {
  for (double v : m.row(r)) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("anchors") {
  TEST_CASE("first Q positions of each block") {
    const auto a = build_anchors(masking::partition(32, 16), 4);
    CHECK(a == std::vector<std::size_t>{0, 1, 2, 3, 16, 17, 18, 19});
  }

  TEST_CASE("Q = B makes every position an anchor") {
    const auto a = build_anchors(masking::partition(40, 8), 8);
    CHECK(a.size() == 40);
  }

  TEST_CASE("short last block is intersected") {
    const auto a = build_anchors(masking::partition(18, 16), 4);
    CHECK(a == std::vector<std::size_t>{0, 1, 2, 3, 16, 17});
  }

  TEST_CASE("Q outside [1, B] is rejected") {
    CHECK_THROWS_AS(build_anchors(masking::partition(32, 16), 17), ParameterError);
    CHECK_THROWS_AS(build_anchors(masking::partition(32, 16), 0), ParameterError);
  }
}

TEST_SUITE("align") {
  const auto anchors = build_anchors(masking::partition(48, 16), 4);

  TEST_CASE("N=3 fills the first three anchors") {
    const auto al = align(states(3, 2), anchors, 48);
    for (std::size_t t = 0; t < 48; ++t) {
      if (t < 3) {
        CHECK(al.h_prime(t, 0) == static_cast<double>(100 * (t + 1)));
      } else {
        CHECK(row_is_zero(al.h_prime, t));
      }
    }
    CHECK(al.source_row[2] == std::optional<std::size_t>(2));
    CHECK(!al.source_row[3].has_value());
  }

  TEST_CASE("N=6 spills into the second block") {
    const auto al = align(states(6, 2), anchors, 48);
    CHECK(al.h_prime(16, 0) == 500.0);
    CHECK(al.h_prime(17, 0) == 600.0);
    CHECK(row_is_zero(al.h_prime, 18));
  }

  TEST_CASE("N=0 gives an all-zero stream") {
    const auto al = align(states(0, 3), anchors, 48);
    for (double v : al.h_prime.flat()) CHECK(v == 0.0);
  }

  TEST_CASE("surplus rows are dropped and counted") {
    const auto al = align(states(14, 2), anchors, 48);
    CHECK(al.dropped == 2);
  }

  TEST_CASE("changing h_m only moves row a_m") {
    auto s = states(5, 2);
    const auto before = align(s, anchors, 48);
    s.h(4, 1) += 1.0;
    const auto after = align(s, anchors, 48);
    for (std::size_t t = 0; t < 48; ++t) {
      const bool same = before.h_prime(t, 1) == after.h_prime(t, 1);
      CHECK(same == (t != 16));
    }
  }

  TEST_CASE("backward gathers anchor rows") {
    const auto al = align(states(5, 2), anchors, 48);
    Matrix g(48, 2);
    for (std::size_t t = 0; t < 48; ++t) g(t, 0) = static_cast<double>(t);
    const Matrix dh = align_backward(al, g, 5);
    CHECK(dh(0, 0) == 0.0);
    CHECK(dh(3, 0) == 3.0);
    CHECK(dh(4, 0) == 16.0);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("identity weights on a non-anchor row give ReLU of the embedding") {
    FusionParams fp(3, 3);
    fp.w1.value = Matrix::identity(3);
    fp.w2.value = Matrix::identity(3);
    const Matrix e = Matrix::from_rows({{1.0, -2.0, 0.5}});
    const Matrix out = fuse(e, Matrix(1, 3), fp);
    CHECK(out == Matrix::from_rows({{1.0, 0.0, 0.5}}));
  }

  TEST_CASE("zero inputs and zero biases give zero") {
    nd::Rng rng(1);
    FusionParams fp(4, 8);
    fp.w1.value = oracle::random_matrix(4, 8, rng);
    fp.w2.value = oracle::random_matrix(8, 4, rng);
    CHECK(fuse(Matrix(5, 4), Matrix(5, 4), fp) == Matrix(5, 4));
  }

  TEST_CASE("width mismatch is a dimension error") {
    FusionParams fp(4, 8);
    CHECK_THROWS_AS(fuse(Matrix(2, 4), Matrix(2, 3), fp), DimensionError);
  }

  TEST_CASE("position-local: one input row affects one output row") {
    nd::Rng rng(2);
    FusionParams fp(4, 6);
    fp.w1.value = oracle::random_matrix(4, 6, rng);
    fp.w2.value = oracle::random_matrix(6, 4, rng);
    Matrix e = oracle::random_matrix(5, 4, rng);
    const Matrix h = oracle::random_matrix(5, 4, rng);
    const Matrix before = fuse(e, h, fp);
    e(2, 1) += 0.5;
    const Matrix after = fuse(e, h, fp);
    for (std::size_t r = 0; r < 5; ++r) {
      if (r == 2) continue;
      for (std::size_t c = 0; c < 4; ++c) CHECK(before(r, c) == after(r, c));
    }
  }

  TEST_CASE("4x4 gradients match finite differences") {
    nd::Rng rng(3);
    FusionParams fp(4, 4);
    fp.w1.value = oracle::random_matrix(4, 4, rng);
    fp.b1.value = oracle::random_matrix(1, 4, rng);
    fp.w2.value = oracle::random_matrix(4, 4, rng);
    fp.b2.value = oracle::random_matrix(1, 4, rng);
    Matrix e = oracle::random_matrix(4, 4, rng);
    Matrix h = oracle::random_matrix(4, 4, rng);
    const Matrix up = oracle::random_matrix(4, 4, rng);
    const auto f = [&] {
      const Matrix o = fuse(e, h, fp);
      double s = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o.flat()[i] * up.flat()[i];
      return s;
    };
    FusionCache cache;
    fuse(e, h, fp, &cache);
    const Matrix din = fuse_backward(cache, fp, up);
    CHECK(oracle::max_rel_error(din, oracle::numeric_grad(f, e)) < 1e-6);
    CHECK(oracle::max_rel_error(din, oracle::numeric_grad(f, h)) < 1e-6);
    CHECK(oracle::max_rel_error(fp.w1.grad, oracle::numeric_grad(f, fp.w1.value)) < 1e-6);
    CHECK(oracle::max_rel_error(fp.b1.grad, oracle::numeric_grad(f, fp.b1.value)) < 1e-6);
    CHECK(oracle::max_rel_error(fp.w2.grad, oracle::numeric_grad(f, fp.w2.value)) < 1e-6);
    CHECK(oracle::max_rel_error(fp.b2.grad, oracle::numeric_grad(f, fp.b2.value)) < 1e-6);
  }
}
