// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/blockdecode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace blockmdm::decode {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

double row_entropy(std::span<const double> row) {
  const double lse = nd::log_sum_exp(row);
  double h = 0.0;
  for (double z : row) {
    const double lp = z - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

TokenSequence decode_block_impl(std::span<const Token> prefix, std::size_t block_length,
                                const train::LogitsFn& model, const DecodeConfig& cfg,
                                const Vocabulary& vocab, BlockTrace& trace,
                                Clock::time_point origin, const DecodeTrace* partial) {
  cfg.validate();
  if (prefix.size() % cfg.block_size != 0) {
    throw ContractError("decode_block: prefix length " + std::to_string(prefix.size()) +
                        " is not a multiple of B=" + std::to_string(cfg.block_size));
  }
  if (block_length < 1 || block_length > cfg.block_size) {
    throw ParameterError("decode_block: block length " + std::to_string(block_length) +
                         " outside [1, B]");
  }
  const std::size_t begin = prefix.size();
  TokenSequence seq(prefix.begin(), prefix.end());
  seq.resize(begin + block_length, vocab.mask());

  trace.begin = begin;
  trace.start_seconds = seconds_between(origin, Clock::now());
  std::vector<std::size_t> pending(block_length);
  for (std::size_t i = 0; i < block_length; ++i) pending[i] = begin + i;
  std::vector<double> conf(seq.size(), 0.0);

  for (std::size_t j = 1; j <= cfg.steps; ++j) {
    const auto step_start = Clock::now();
    const nd::Matrix logits = model(seq);
    ++trace.forward_passes;
    if (logits.rows() != seq.size() || logits.cols() != vocab.size()) {
      throw DimensionError("decode_block: model returned " + logits.shape_string());
    }
    StepTrace step;
    for (std::size_t t : pending) {
      const auto row = logits.row(t);
      for (double z : row) {
        if (!std::isfinite(z)) {
          trace.steps.push_back(step);
          DecodeTrace dt = partial ? *partial : DecodeTrace{};
          dt.blocks.push_back(trace);
          throw DecodeError("decode_block: non-finite logits at position " + std::to_string(t) +
                                ", step " + std::to_string(j),
                            std::move(dt));
        }
      }
      conf[t] = train::confidence(row);
    }
    const std::size_t n = train::schedule_step(pending.size(), j, cfg.steps);
    for (std::size_t t : train::top_confident(pending, conf, n)) {
      const auto row = logits.row(t);
      seq[t] = train::argmax_emittable(row, vocab);
      step.revealed.push_back(t);
      step.confidences.push_back(conf[t]);
      step.entropies.push_back(row_entropy(row));
    }
    std::erase_if(pending, [&](std::size_t t) { return seq[t] != vocab.mask(); });
    step.seconds = seconds_between(step_start, Clock::now());
    trace.steps.push_back(std::move(step));
  }
  if (!pending.empty()) {
    throw std::logic_error("decode_block: positions left masked after K steps");
  }
  trace.end_seconds = seconds_between(origin, Clock::now());
  return TokenSequence(seq.begin() + static_cast<std::ptrdiff_t>(begin), seq.end());
}

}  // namespace

void DecodeConfig::validate() const {
  if (block_size < 1) throw ParameterError("DecodeConfig: B must be >= 1");
  if (steps < 1) throw ParameterError("DecodeConfig: K must be >= 1");
  if (max_blocks < 1) throw ParameterError("DecodeConfig: max_blocks must be >= 1");
}

std::size_t BlockTrace::revealed_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.revealed.size();
  return n;
}

TokenSequence decode_block(std::span<const Token> prefix, std::size_t block_length,
                           const train::LogitsFn& model, const DecodeConfig& cfg,
                           const Vocabulary& vocab, BlockTrace& trace) {
  return decode_block_impl(prefix, block_length, model, cfg, vocab, trace, Clock::now(), nullptr);
}

DecodeResult decode_stream(const train::LogitsFn& model, const DecodeConfig& cfg,
                           const Vocabulary& vocab, const BlockConsumer& consumer) {
  cfg.validate();
  const auto origin = Clock::now();
  DecodeResult res;
  TokenSequence prefix;
  for (std::size_t k = 0; k < cfg.max_blocks; ++k) {
    BlockTrace bt;
    bt.index = k;
    const TokenSequence block =
        decode_block_impl(prefix, cfg.block_size, model, cfg, vocab, bt, origin, &res.trace);
    res.trace.forward_passes += bt.forward_passes;
    prefix.insert(prefix.end(), block.begin(), block.end());
    res.trace.blocks.push_back(std::move(bt));
    if (consumer) consumer(block, res.trace.blocks.back());
    const auto eos_it = std::find(block.begin(), block.end(), cfg.eos);
    if (eos_it != block.end()) {
      res.tokens.insert(res.tokens.end(), block.begin(), eos_it);
      res.ended_with_eos = true;
      break;
    }
    res.tokens.insert(res.tokens.end(), block.begin(), block.end());
  }
  res.truncated_by_limit = !res.ended_with_eos;
  res.trace.total_seconds = seconds_between(origin, Clock::now());
  return res;
}

train::LogitsFn talker_logits(const talker::Talker& model, const talker::Conditioning& cond) {
  return [&model, &cond](std::span<const Token> seq) { return model.forward(seq, cond); };
}

DecodeResult decode_talker(const talker::Talker& model, std::span<const Token> source,
                           const DecodeConfig& cfg, const BlockConsumer& consumer) {
  cfg.validate();
  const auto& tc = model.config();
  if (cfg.block_size != tc.block_size) {
    throw ParameterError("decode: B=" + std::to_string(cfg.block_size) +
                         " differs from the checkpoint's block size " +
                         std::to_string(tc.block_size));
  }
  if (cfg.eos != tc.vocab.eos()) throw ParameterError("decode: EOS id differs from checkpoint");
  const std::size_t canvas = cfg.max_blocks * cfg.block_size;
  if (canvas > tc.max_len) {
    throw ParameterError("decode: max_blocks * B = " + std::to_string(canvas) +
                         " exceeds the model's max_len " + std::to_string(tc.max_len));
  }
  const talker::Conditioning cond = model.condition(source, canvas);
  return decode_stream(talker_logits(model, cond), cfg, tc.vocab, consumer);
}

}  // namespace blockmdm::decode
