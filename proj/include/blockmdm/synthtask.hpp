// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "blockmdm/nd/rng.hpp"
#include "blockmdm/vocab.hpp"

namespace blockmdm::synth {

// Synthetic conditioning task: every source token expands to a fixed
// fragment of `upsample` data tokens; targets end with EOS.
struct TaskSpec {
  std::size_t source_vocab = 16;
  Vocabulary vocab{};
  std::size_t upsample = 4;
  std::uint64_t grammar_seed = 0;
  double noise = 0.0;  // per-position substitution rate

  void validate() const;
};

struct Grammar {
  std::size_t upsample = 0;
  std::vector<TokenSequence> fragments;  // indexed by source token

  // Noise-free target (with EOS) for a source sequence.
  TokenSequence expand(std::span<const Token> source, Token eos) const;
};

struct SamplePair {
  TokenSequence source;  // length N
  TokenSequence target;  // length U*N + 1, EOS-terminated
};

// Deterministic per grammar seed. Fragments are pairwise distinct whenever
// the data vocabulary admits it.
Grammar gen_grammar(const TaskSpec& spec);

// `count` pairs with N drawn uniformly from [n_min, n_max] and sources
// uniform over the source vocabulary.
std::vector<SamplePair> gen_dataset(const TaskSpec& spec, std::size_t count, std::size_t n_min,
                                    std::size_t n_max, nd::Rng& rng);

struct ErrorRate {
  double rate = 0.0;
  std::size_t edits = 0;
  std::size_t ref_length = 0;
  bool empty_reference = false;  // rate = hyp length by convention
};

// Token-level Levenshtein distance normalised by the reference length.
ErrorRate token_error_rate(std::span<const Token> hyp, std::span<const Token> ref);
std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b);

// Corpus files (UTF-8 text):
//   line 1: "# blockmdm-corpus v1 source_vocab=S data_vocab=D upsample=U
//            grammar_seed=G noise=R count=C"
//   then, for each record, the source ids one per line, a blank line, the
//   target ids one per line, and a blank line. A record with an empty target
//   block carries conditioning only.
struct Corpus {
  TaskSpec spec;
  std::vector<SamplePair> samples;
};

void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace blockmdm::synth
