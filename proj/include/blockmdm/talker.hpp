// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blockmdm/nd/matrix.hpp"
#include "blockmdm/nd/ops.hpp"
#include "blockmdm/nd/optim.hpp"
#include "blockmdm/nd/rng.hpp"
#include "blockmdm/semantics.hpp"
#include "blockmdm/vocab.hpp"

namespace blockmdm::talker {

struct TalkerConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t width = 64;
  std::size_t ff_width = 256;
  std::size_t fusion_width = 256;  // d_ff of the fusion module, 4d by default
  Vocabulary vocab{};
  std::size_t block_size = 16;
  std::size_t anchors_per_block = 4;
  std::size_t max_len = 256;
  std::size_t source_vocab = 16;

  // Throws ParameterError (width % heads, Q > B, zero sizes).
  void validate() const;
  friend bool operator==(const TalkerConfig& a, const TalkerConfig& b);
};

// visible(t, t') iff block(t') <= block(t).
nd::Visibility build_block_causal_mask(std::size_t length, std::size_t block_size);

struct LayerParams {
  nd::Param ln1_gamma, ln1_beta;
  nd::Param wq, bq, wk, bk, wv, bv, wo, bo;
  nd::Param ln2_gamma, ln2_beta;
  nd::Param ff1_w, ff1_b, ff2_w, ff2_b;
};

struct LayerCache {
  nd::Matrix input;
  nd::LayerNormCache ln1;
  nd::Matrix norm1;
  std::vector<nd::Matrix> q, k, v;  // per head
  std::vector<nd::AttentionCache> attention;
  nd::Matrix heads_out;
  nd::Matrix mid;
  nd::LayerNormCache ln2;
  nd::Matrix norm2;
  nd::Matrix ff_pre;
  nd::Matrix ff_act;
};

struct ForwardCache {
  TokenSequence tokens;
  TokenSequence source;
  std::vector<std::size_t> anchors;
  std::vector<std::optional<std::size_t>> source_row;
  nd::Visibility mask;
  semantics::FusionCache fusion;
  std::vector<LayerCache> layers;
  nd::LayerNormCache final_ln;
  nd::Matrix final_norm;
};

// Conditioning for one sequence: source ids plus the aligned stream built
// from their embeddings.
struct Conditioning {
  TokenSequence source;
  semantics::AlignedSemantics aligned;
};

// Mask predictor: token + fused semantic embedding, learned absolute
// positions, pre-norm block-causal transformer layers, final norm and a
// vocabulary head.
class Talker {
 public:
  explicit Talker(TalkerConfig cfg);
  Talker(const Talker& other);
  Talker& operator=(const Talker& other);
  Talker(Talker&& other) noexcept;
  Talker& operator=(Talker&& other) noexcept;

  // Random initialisation; the head starts at zero when zero_head is set so
  // the untrained model predicts uniform distributions.
  void init(nd::Rng& rng, bool zero_head = true);

  const TalkerConfig& config() const noexcept { return cfg_; }
  std::size_t vocab_size() const noexcept { return cfg_.vocab.size(); }

  // Parameters in checkpoint order.
  std::vector<nd::Param*> params();
  std::vector<const nd::Param*> params() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Semantic states for a source sequence (embedding lookup), and the aligned
  // stream over a sequence of `length` positions.
  semantics::SemanticStates semantic_states(std::span<const Token> source) const;
  Conditioning condition(std::span<const Token> source, std::size_t length) const;

  // Logits (T x V) for tokens[0..T). Uses the first T rows of the conditioning
  // stream. Throws InputError for out-of-vocabulary ids or T > max_len.
  nd::Matrix forward(std::span<const Token> tokens, const Conditioning& cond,
                     ForwardCache* cache = nullptr) const;

  // Accumulates parameter gradients for d(loss)/d(logits).
  void backward(const ForwardCache& cache, const nd::Matrix& dlogits);

  // FNV-1a over every parameter value in checkpoint order.
  std::uint64_t checksum() const;

 private:
  void collect();

  TalkerConfig cfg_;
  nd::Param tok_emb_;
  nd::Param pos_emb_;
  nd::Param src_emb_;
  semantics::FusionParams fusion_;
  std::vector<LayerParams> layers_;
  nd::Param final_gamma_, final_beta_;
  nd::Param head_w_, head_b_;
  std::vector<nd::Param*> order_;
};

// Binary checkpoint, all integers and floats little-endian:
//   magic "BMDMCKPT" (8 bytes), u32 version (=1)
//   u32 x 15 config: layers, heads, width, ff_width, fusion_width,
//       data_vocab, vocab_size, mask_id, eos_id, pad_id, block_size,
//       anchors_per_block, max_len, source_vocab, param_count
//   per parameter in Talker::params() order:
//       u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f64
void save_checkpoint(const Talker& model, std::ostream& out);
void save_checkpoint(const Talker& model, const std::filesystem::path& path);
Talker load_checkpoint(std::istream& in);
Talker load_checkpoint(const std::filesystem::path& path);

// Throws LoadError listing every differing field (V, d, B, ...).
void require_compatible(const TalkerConfig& expected, const TalkerConfig& actual,
                        const std::string& context);

}  // namespace blockmdm::talker
