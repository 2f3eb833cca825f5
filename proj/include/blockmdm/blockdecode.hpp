// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "blockmdm/diffusion_train.hpp"
#include "blockmdm/errors.hpp"
#include "blockmdm/talker.hpp"
#include "blockmdm/vocab.hpp"

namespace blockmdm::decode {

struct DecodeConfig {
  std::size_t block_size = 16;  // B
  std::size_t steps = 4;        // K
  std::size_t max_blocks = 16;
  Token eos = Vocabulary{}.eos();

  // Throws ParameterError unless B, K, max_blocks >= 1.
  void validate() const;
};

struct StepTrace {
  std::vector<std::size_t> revealed;  // absolute positions, in selection order
  std::vector<double> confidences;    // max softmax probability per revealed position
  std::vector<double> entropies;      // predictive entropy per revealed position
  double seconds = 0.0;               // wall time of the step, forward pass included
};

struct BlockTrace {
  std::size_t index = 0;
  std::size_t begin = 0;  // first absolute position of the block
  std::size_t forward_passes = 0;
  std::vector<StepTrace> steps;
  double start_seconds = 0.0;  // offsets from the start of the session
  double end_seconds = 0.0;

  std::size_t revealed_count() const;
};

struct DecodeTrace {
  std::vector<BlockTrace> blocks;
  std::size_t forward_passes = 0;
  double total_seconds = 0.0;
};

// Carries the partial trace of a decode that hit non-finite logits.
class DecodeError : public NumericError {
 public:
  DecodeError(const std::string& what, DecodeTrace trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const DecodeTrace& trace() const noexcept { return trace_; }

 private:
  DecodeTrace trace_;
};

struct DecodeResult {
  TokenSequence tokens;  // output up to (not including) the earliest EOS
  bool ended_with_eos = false;
  bool truncated_by_limit = false;
  DecodeTrace trace;
};

// Denoises one block appended to `prefix` with K forward passes of `model`,
// revealing the top-n_j positions by confidence at step j (argmax tokens,
// ties to the lowest index). `prefix.size()` must be a multiple of B;
// `block_length` may be shorter than B only for a final partial block.
// Throws DecodeError on non-finite logits.
TokenSequence decode_block(std::span<const Token> prefix, std::size_t block_length,
                           const train::LogitsFn& model, const DecodeConfig& cfg,
                           const Vocabulary& vocab, BlockTrace& trace);

// Called once per completed block with its tokens and trace, before the next
// block starts. Emitted blocks are final.
using BlockConsumer = std::function<void(std::span<const Token> block, const BlockTrace& trace)>;

// Generates blocks until a completed block contains EOS (output truncated at
// its earliest position) or max_blocks is reached.
DecodeResult decode_stream(const train::LogitsFn& model, const DecodeConfig& cfg,
                           const Vocabulary& vocab, const BlockConsumer& consumer = {});

// Talker-backed decoding. The conditioning canvas covers max_blocks * B
// positions; cfg.block_size must equal the checkpoint's block size.
DecodeResult decode_talker(const talker::Talker& model, std::span<const Token> source,
                           const DecodeConfig& cfg, const BlockConsumer& consumer = {});

// Logits function for a fixed conditioning.
train::LogitsFn talker_logits(const talker::Talker& model, const talker::Conditioning& cond);

}  // namespace blockmdm::decode
