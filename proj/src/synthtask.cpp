// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/synthtask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "blockmdm/errors.hpp"

namespace blockmdm::synth {

void TaskSpec::validate() const {
  vocab.validate();
  if (source_vocab < 1) throw ParameterError("TaskSpec: source_vocab must be >= 1");
  if (upsample < 1) throw ParameterError("TaskSpec: upsample must be >= 1");
  if (!(noise >= 0.0 && noise < 0.5)) {
    throw ParameterError("TaskSpec: noise " + std::to_string(noise) + " outside [0, 0.5)");
  }
}

TokenSequence Grammar::expand(std::span<const Token> source, Token eos) const {
  TokenSequence out;
  out.reserve(source.size() * upsample + 1);
  for (Token s : source) {
    const auto& frag = fragments.at(static_cast<std::size_t>(s));
    out.insert(out.end(), frag.begin(), frag.end());
  }
  out.push_back(eos);
  return out;
}

Grammar gen_grammar(const TaskSpec& spec) {
  spec.validate();
  nd::Rng rng(spec.grammar_seed);
  Grammar g;
  g.upsample = spec.upsample;
  std::set<TokenSequence> seen;
  const auto data = static_cast<std::uint64_t>(spec.vocab.data_size);
  // Distinctness is only attainable when D^U >= S; give up after a bounded
  // number of redraws otherwise.
  constexpr int kMaxRedraws = 64;
  for (std::size_t s = 0; s < spec.source_vocab; ++s) {
    TokenSequence frag(spec.upsample);
    for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      for (auto& tok : frag) tok = static_cast<Token>(rng.below(data));
      if (!seen.contains(frag)) break;
    }
    seen.insert(frag);
    g.fragments.push_back(frag);
  }
  return g;
}

std::vector<SamplePair> gen_dataset(const TaskSpec& spec, std::size_t count, std::size_t n_min,
                                    std::size_t n_max, nd::Rng& rng) {
  spec.validate();
  if (count < 1) throw ParameterError("gen_dataset: count must be >= 1");
  if (n_min < 1 || n_min > n_max) {
    throw ParameterError("gen_dataset: N range [" + std::to_string(n_min) + ", " +
                         std::to_string(n_max) + "] invalid");
  }
  const Grammar grammar = gen_grammar(spec);
  const auto data = static_cast<std::uint64_t>(spec.vocab.data_size);
  std::vector<SamplePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SamplePair pair;
    const std::size_t n = n_min + static_cast<std::size_t>(rng.below(n_max - n_min + 1));
    pair.source.resize(n);
    for (auto& s : pair.source) s = static_cast<Token>(rng.below(spec.source_vocab));
    pair.target = grammar.expand(pair.source, spec.vocab.eos());
    if (spec.noise > 0.0 && data > 1) {
      for (std::size_t t = 0; t + 1 < pair.target.size(); ++t) {
        if (rng.uniform() < spec.noise) {
          // Uniform over the other D - 1 data tokens.
          auto repl = static_cast<Token>(rng.below(data - 1));
          if (repl >= pair.target[t]) ++repl;
          pair.target[t] = repl;
        }
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

ErrorRate token_error_rate(std::span<const Token> hyp, std::span<const Token> ref) {
  ErrorRate r;
  r.edits = edit_distance(hyp, ref);
  r.ref_length = ref.size();
  if (ref.empty()) {
    r.empty_reference = true;
    r.rate = static_cast<double>(hyp.size());
  } else {
    r.rate = static_cast<double>(r.edits) / static_cast<double>(ref.size());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Corpus I/O
// ---------------------------------------------------------------------------

void write_corpus(const Corpus& corpus, std::ostream& out) {
  const TaskSpec& s = corpus.spec;
  std::ostringstream noise;
  noise.precision(17);
  noise << s.noise;
  out << "# blockmdm-corpus v1 source_vocab=" << s.source_vocab
      << " data_vocab=" << s.vocab.data_size << " upsample=" << s.upsample
      << " grammar_seed=" << s.grammar_seed << " noise=" << noise.str()
      << " count=" << corpus.samples.size() << "\n";
  for (const auto& pair : corpus.samples) {
    for (Token t : pair.source) out << t << "\n";
    out << "\n";
    for (Token t : pair.target) out << t << "\n";
    out << "\n";
  }
  if (!out) throw LoadError("corpus: write failed");
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("corpus: cannot open '" + path.string() + "' for writing");
  write_corpus(corpus, out);
}

namespace {

Token parse_token(const std::string& line, std::size_t line_no) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(line, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != line.size() || v < 0 || v > INT32_MAX) {
    throw InputError("corpus: line " + std::to_string(line_no) + ": expected a token id, got '" +
                     line + "'");
  }
  return static_cast<Token>(v);
}

}  // namespace

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("# blockmdm-corpus v1", 0) != 0) {
    throw InputError("corpus: missing '# blockmdm-corpus v1' header");
  }
  std::size_t declared_count = 0;
  bool has_count = false;
  {
    std::istringstream header(line.substr(std::string("# blockmdm-corpus v1").size()));
    std::string field;
    while (header >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw InputError("corpus: bad header field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      try {
        if (key == "source_vocab") corpus.spec.source_vocab = std::stoull(value);
        else if (key == "data_vocab") corpus.spec.vocab.data_size = std::stoi(value);
        else if (key == "upsample") corpus.spec.upsample = std::stoull(value);
        else if (key == "grammar_seed") corpus.spec.grammar_seed = std::stoull(value);
        else if (key == "noise") corpus.spec.noise = std::stod(value);
        else if (key == "count") { declared_count = std::stoull(value); has_count = true; }
        else throw InputError("corpus: unknown header field '" + key + "'");
      } catch (const std::logic_error&) {
        throw InputError("corpus: bad header value '" + field + "'");
      }
    }
  }
  const auto read_block = [&](TokenSequence& dst) {
    // Reads ids until a blank line or EOF; returns false on immediate EOF.
    bool any_line = false;
    while (std::getline(in, line)) {
      ++line_no;
      any_line = true;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) return true;
      dst.push_back(parse_token(line, line_no));
    }
    return any_line;
  };
  for (;;) {
    SamplePair pair;
    if (!read_block(pair.source)) break;
    if (pair.source.empty()) {
      throw InputError("corpus: line " + std::to_string(line_no) + ": empty source block");
    }
    read_block(pair.target);
    corpus.samples.push_back(std::move(pair));
  }
  if (has_count && declared_count != corpus.samples.size()) {
    throw InputError("corpus: header declares " + std::to_string(declared_count) +
                     " records, found " + std::to_string(corpus.samples.size()));
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("corpus: cannot open '" + path.string() + "'");
  return read_corpus(in);
}

}  // namespace blockmdm::synth
