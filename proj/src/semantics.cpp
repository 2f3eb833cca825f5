// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/semantics.hpp"

#include <algorithm>
#include <iostream>

#include "blockmdm/errors.hpp"
#include "blockmdm/nd/ops.hpp"

namespace blockmdm::semantics {

std::vector<std::size_t> build_anchors(const masking::BlockPartition& part, std::size_t q) {
  if (q < 1 || q > part.block_size()) {
    throw ParameterError("build_anchors: Q=" + std::to_string(q) + " must lie in [1, B=" +
                         std::to_string(part.block_size()) + "]");
  }
  std::vector<std::size_t> anchors;
  anchors.reserve(part.num_blocks() * q);
  for (std::size_t k = 0; k < part.num_blocks(); ++k) {
    const std::size_t begin = part.block_begin(k);
    const std::size_t end = std::min(begin + q, part.block_end(k));
    for (std::size_t t = begin; t < end; ++t) anchors.push_back(t);
  }
  return anchors;
}

AlignedSemantics align(const SemanticStates& states, const std::vector<std::size_t>& anchors,
                       std::size_t length) {
  if (!std::is_sorted(anchors.begin(), anchors.end())) {
    throw ParameterError("align: anchors must be sorted");
  }
  AlignedSemantics out;
  out.h_prime = nd::Matrix(length, states.width());
  out.anchors = anchors;
  out.source_row.assign(anchors.size(), std::nullopt);
  const std::size_t n = states.count();
  for (std::size_t m = 0; m < anchors.size(); ++m) {
    if (anchors[m] >= length) {
      throw ParameterError("align: anchor " + std::to_string(anchors[m]) + " beyond length " +
                           std::to_string(length));
    }
    if (m < n) {
      const auto src = states.h.row(m);
      std::copy(src.begin(), src.end(), out.h_prime.row(anchors[m]).begin());
      out.source_row[m] = m;
    }
  }
  if (n > anchors.size()) {
    out.dropped = n - anchors.size();
    std::cerr << "warning: align: " << out.dropped << " of " << n
              << " semantic rows exceed the " << anchors.size() << " anchors and were dropped\n";
  }
  return out;
}

nd::Matrix align_backward(const AlignedSemantics& aligned, const nd::Matrix& grad_h_prime,
                          std::size_t source_count) {
  nd::Matrix dh(source_count, aligned.width());
  for (std::size_t m = 0; m < aligned.anchors.size(); ++m) {
    if (!aligned.source_row[m]) continue;
    const std::size_t t = aligned.anchors[m];
    if (t >= grad_h_prime.rows()) continue;
    const auto g = grad_h_prime.row(t);
    auto dst = dh.row(*aligned.source_row[m]);
    for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
  }
  return dh;
}

FusionParams::FusionParams(std::size_t width, std::size_t hidden)
    : w1("fusion.w1", width, hidden),
      b1("fusion.b1", 1, hidden, false),
      w2("fusion.w2", hidden, width),
      b2("fusion.b2", 1, width, false) {}

nd::Matrix fuse(const nd::Matrix& tok_emb, const nd::Matrix& h_prime, const FusionParams& fp,
                FusionCache* cache) {
  if (tok_emb.cols() != fp.width() || h_prime.cols() != fp.width()) {
    throw DimensionError("fuse: token embeddings " + tok_emb.shape_string() + ", h' " +
                         h_prime.shape_string() + ", fusion width " + std::to_string(fp.width()));
  }
  if (h_prime.rows() < tok_emb.rows()) {
    throw DimensionError("fuse: h' has " + std::to_string(h_prime.rows()) + " rows for " +
                         std::to_string(tok_emb.rows()) + " tokens");
  }
  nd::Matrix input = tok_emb;
  for (std::size_t r = 0; r < input.rows(); ++r) {
    auto dst = input.row(r);
    const auto src = h_prime.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
  nd::Matrix pre = nd::linear(input, fp.w1.value, fp.b1.value);
  nd::Matrix act = nd::relu(pre);
  nd::Matrix out = nd::linear(act, fp.w2.value, fp.b2.value);
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->pre_relu = std::move(pre);
    cache->activation = std::move(act);
  }
  return out;
}

nd::Matrix fuse_backward(const FusionCache& cache, FusionParams& fp, const nd::Matrix& dout) {
  nd::Matrix dact = nd::linear_backward(cache.activation, fp.w2.value, dout, fp.w2.grad, fp.b2.grad);
  nd::Matrix dpre = nd::relu_backward(cache.pre_relu, dact);
  return nd::linear_backward(cache.input, fp.w1.value, dpre, fp.w1.grad, fp.b1.grad);
}

}  // namespace blockmdm::semantics
