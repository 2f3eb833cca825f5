// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "blockmdm/errors.hpp"
#include "json.hpp"

namespace blockmdm::bench {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::ordered_json;

double elapsed(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

TokenSequence reference_tokens(const synth::SamplePair& pair, Token eos) {
  TokenSequence ref = pair.target;
  const auto it = std::find(ref.begin(), ref.end(), eos);
  ref.erase(it, ref.end());
  return ref;
}

decode::DecodeConfig decode_config(const talker::Talker& model, std::size_t steps,
                                   std::size_t max_blocks) {
  decode::DecodeConfig dc;
  dc.block_size = model.config().block_size;
  dc.steps = steps;
  dc.max_blocks = max_blocks;
  dc.eos = model.config().vocab.eos();
  return dc;
}

struct StepAccumulator {
  std::vector<double> conf, ent;
  std::vector<std::size_t> count;

  explicit StepAccumulator(std::size_t steps) : conf(steps, 0.0), ent(steps, 0.0), count(steps, 0) {}

  void add(const decode::DecodeTrace& trace) {
    for (const auto& block : trace.blocks) {
      for (std::size_t j = 0; j < block.steps.size() && j < conf.size(); ++j) {
        const auto& s = block.steps[j];
        for (std::size_t i = 0; i < s.revealed.size(); ++i) {
          conf[j] += s.confidences[i];
          ent[j] += s.entropies[i];
          ++count[j];
        }
      }
    }
  }

  std::vector<StepStats> finish() const {
    std::vector<StepStats> out(conf.size());
    for (std::size_t j = 0; j < conf.size(); ++j) {
      out[j].step = j + 1;
      out[j].positions = count[j];
      if (count[j] > 0) {
        out[j].mean_confidence = conf[j] / static_cast<double>(count[j]);
        out[j].mean_entropy = ent[j] / static_cast<double>(count[j]);
      }
    }
    return out;
  }
};

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  if (xs.size() > 1) var /= static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var)};
}

void check_eval_fits(const talker::TalkerConfig& tc, std::span<const synth::SamplePair> eval) {
  for (std::size_t i = 0; i < eval.size(); ++i) {
    for (Token s : eval[i].source) {
      if (s < 0 || static_cast<std::size_t>(s) >= tc.source_vocab) {
        throw LoadError("bench: eval record " + std::to_string(i) + " has source id " +
                        std::to_string(s) + " outside the model's source_vocab " +
                        std::to_string(tc.source_vocab));
      }
    }
    for (Token t : eval[i].target) {
      if (!tc.vocab.is_emittable(t)) {
        throw LoadError("bench: eval record " + std::to_string(i) + " has target id " +
                        std::to_string(t) + " outside the model's vocabulary");
      }
    }
  }
}

}  // namespace

Metrics evaluate(const talker::Talker& model, std::span<const synth::SamplePair> samples,
                 std::size_t steps, std::size_t max_blocks, double nominal_token_seconds,
                 std::vector<TokenSequence>* outputs) {
  const auto dc = decode_config(model, steps, max_blocks);
  dc.validate();
  const Token eos = model.config().vocab.eos();
  Metrics m;
  m.steps = steps;
  m.samples = samples.size();
  StepAccumulator acc(steps);
  if (outputs) outputs->clear();
  for (const auto& pair : samples) {
    const auto t0 = Clock::now();
    const decode::DecodeResult res = decode::decode_talker(model, pair.source, dc);
    m.wall_seconds += elapsed(t0, Clock::now());
    m.blocks += res.trace.blocks.size();
    m.tokens += res.trace.blocks.size() * dc.block_size;
    m.emitted_tokens += res.tokens.size();
    m.forward_passes += res.trace.forward_passes;
    const TokenSequence ref = reference_tokens(pair, eos);
    m.edits += synth::edit_distance(res.tokens, ref);
    m.ref_tokens += ref.size();
    acc.add(res.trace);
    if (outputs) outputs->push_back(res.tokens);
  }
  m.error_rate = m.ref_tokens > 0 ? static_cast<double>(m.edits) / static_cast<double>(m.ref_tokens)
                                  : static_cast<double>(m.edits);
  m.per_step = acc.finish();
  if (m.wall_seconds > 0.0 && m.tokens > 0) {
    m.tps = static_cast<double>(m.tokens) / m.wall_seconds;
    m.rtf_analog = m.wall_seconds / (static_cast<double>(m.tokens) * nominal_token_seconds);
  }
  return m;
}

std::vector<StepStats> uncertainty_profile(const talker::Talker& model,
                                           std::span<const synth::SamplePair> samples,
                                           std::size_t steps, std::size_t max_blocks) {
  if (steps < 1) throw ParameterError("uncertainty_profile: K must be >= 1");
  return evaluate(model, samples, steps, max_blocks).per_step;
}

StageSummary first_chunk_breakdown(const talker::Talker& model,
                                   std::span<const synth::SamplePair> samples, std::size_t steps,
                                   std::size_t max_blocks, std::size_t warmups) {
  const auto dc = decode_config(model, steps, max_blocks);
  dc.validate();
  const auto& tc = model.config();
  const std::size_t canvas = dc.max_blocks * dc.block_size;
  if (canvas > tc.max_len) throw ParameterError("first_chunk_breakdown: canvas exceeds max_len");

  std::vector<double> sem, tal, post, total;
  TokenSequence sink;
  const auto run_one = [&](const synth::SamplePair& pair, bool record) {
    const auto t0 = Clock::now();
    const talker::Conditioning cond = model.condition(pair.source, canvas);
    const auto t1 = Clock::now();
    decode::BlockTrace bt;
    const TokenSequence block = decode::decode_block({}, dc.block_size,
                                                     decode::talker_logits(model, cond), dc,
                                                     tc.vocab, bt);
    const auto t2 = Clock::now();
    const auto eos_it = std::find(block.begin(), block.end(), dc.eos);
    sink.assign(block.begin(), eos_it);
    const auto t3 = Clock::now();
    if (record) {
      sem.push_back(elapsed(t0, t1));
      tal.push_back(elapsed(t1, t2));
      post.push_back(elapsed(t2, t3));
      total.push_back(elapsed(t0, t3));
    }
  };
  if (!samples.empty()) {
    for (std::size_t w = 0; w < warmups; ++w) run_one(samples[w % samples.size()], false);
  }
  for (const auto& pair : samples) run_one(pair, true);

  StageSummary s;
  s.runs = total.size();
  if (s.runs == 0) return s;
  std::tie(s.mean.semantics, s.stddev.semantics) = mean_std(sem);
  std::tie(s.mean.talker, s.stddev.talker) = mean_std(tal);
  std::tie(s.mean.post, s.stddev.post) = mean_std(post);
  std::tie(s.mean.total, s.stddev.total) = mean_std(total);
  return s;
}

void ExperimentConfig::validate() const {
  if (steps.empty()) throw ParameterError("ExperimentConfig: step list is empty");
  for (std::size_t k : steps) {
    if (k < 1) throw ParameterError("ExperimentConfig: step counts must be positive");
  }
  if (repetitions < 1) throw ParameterError("ExperimentConfig: repetitions must be >= 1");
  if (checkpoints.empty()) throw ParameterError("ExperimentConfig: no checkpoints");
  if (max_blocks < 1) throw ParameterError("ExperimentConfig: max_blocks must be >= 1");
  if (!(nominal_token_seconds > 0.0)) {
    throw ParameterError("ExperimentConfig: nominal token duration must be positive");
  }
}

SweepReport bench_sweep(const ExperimentConfig& cfg, std::span<const talker::Talker> models,
                        std::span<const synth::SamplePair> eval) {
  cfg.validate();
  if (models.size() != cfg.checkpoints.size()) {
    throw ParameterError("bench_sweep: " + std::to_string(models.size()) + " models for " +
                         std::to_string(cfg.checkpoints.size()) + " checkpoint labels");
  }
  for (std::size_t i = 1; i < models.size(); ++i) {
    talker::require_compatible(models[0].config(), models[i].config(),
                               "bench: '" + cfg.checkpoints[i].label + "' vs '" +
                                   cfg.checkpoints[0].label + "'");
  }
  check_eval_fits(models[0].config(), eval);
  std::span<const synth::SamplePair> set = eval;
  if (cfg.eval_limit > 0 && cfg.eval_limit < set.size()) set = set.first(cfg.eval_limit);

  SweepReport report;
  report.config = cfg;
  for (std::size_t c = 0; c < models.size(); ++c) {
    for (std::size_t k : cfg.steps) {
      SweepRow row;
      row.checkpoint = cfg.checkpoints[c].label;
      row.steps = k;
      if (!set.empty()) {
        for (std::size_t w = 0; w < cfg.warmups; ++w) {
          evaluate(models[c], set.first(1), k, cfg.max_blocks, cfg.nominal_token_seconds);
        }
      }
      std::vector<double> tps, rtf, wall;
      for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        Metrics m = evaluate(models[c], set, k, cfg.max_blocks, cfg.nominal_token_seconds);
        tps.push_back(m.tps);
        rtf.push_back(m.rtf_analog);
        wall.push_back(m.wall_seconds);
        if (r == 0) row.metrics = std::move(m);
      }
      std::tie(row.tps_mean, row.tps_std) = mean_std(tps);
      std::tie(row.rtf_mean, row.rtf_std) = mean_std(rtf);
      std::tie(row.wall_mean, row.wall_std) = mean_std(wall);
      row.first_chunk = first_chunk_breakdown(models[c], set, k, cfg.max_blocks, cfg.warmups);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

SweepReport bench_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<talker::Talker> models;
  models.reserve(cfg.checkpoints.size());
  for (const auto& ref : cfg.checkpoints) models.push_back(talker::load_checkpoint(ref.path));
  const synth::Corpus corpus = synth::read_corpus(cfg.eval_path);
  return bench_sweep(cfg, models, corpus.samples);
}

void write_sweep_csv(const SweepReport& report, std::ostream& out) {
  out << "checkpoint,K,tps,tps_std,rtf_analog,rtf_std,err_rate,conf_step1,entropy_step1,"
         "forward_passes,blocks,latency_stage_semantics,latency_stage_talker,latency_stage_post,"
         "latency_total\n";
  const auto old = out.precision(10);
  for (const auto& r : report.rows) {
    const StepStats first = r.metrics.per_step.empty() ? StepStats{} : r.metrics.per_step.front();
    out << r.checkpoint << "," << r.steps << "," << r.tps_mean << "," << r.tps_std << ","
        << r.rtf_mean << "," << r.rtf_std << "," << r.metrics.error_rate << ","
        << first.mean_confidence << "," << first.mean_entropy << "," << r.metrics.forward_passes
        << "," << r.metrics.blocks << "," << r.first_chunk.mean.semantics << ","
        << r.first_chunk.mean.talker << "," << r.first_chunk.mean.post << ","
        << r.first_chunk.mean.total << "\n";
  }
  out.precision(old);
}

namespace {

ordered_json steps_json(const std::vector<StepStats>& steps) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : steps) {
    arr.push_back({{"step", s.step},
                   {"positions", s.positions},
                   {"mean_confidence", s.mean_confidence},
                   {"mean_entropy", s.mean_entropy}});
  }
  return arr;
}

ordered_json metrics_object(const Metrics& m, bool include_timing) {
  ordered_json j{{"K", m.steps},
                 {"samples", m.samples},
                 {"tokens", m.tokens},
                 {"emitted_tokens", m.emitted_tokens},
                 {"forward_passes", m.forward_passes},
                 {"blocks", m.blocks},
                 {"edits", m.edits},
                 {"ref_tokens", m.ref_tokens},
                 {"err_rate", m.error_rate},
                 {"per_step", steps_json(m.per_step)}};
  if (include_timing) {
    j["timing"] = {{"nondeterministic", true},
                   {"wall_seconds", m.wall_seconds},
                   {"tps", m.tps},
                   {"rtf_analog", m.rtf_analog}};
  }
  return j;
}

ordered_json latency_json(const StageLatency& l) {
  return {{"semantics", l.semantics}, {"talker", l.talker}, {"post", l.post}, {"total", l.total}};
}

}  // namespace

std::string metrics_json(const Metrics& m, bool include_timing) {
  return metrics_object(m, include_timing).dump(2);
}

std::string sweep_json(const SweepReport& report) {
  const auto& c = report.config;
  ordered_json cfg{{"steps", c.steps},
                   {"eval_path", c.eval_path.string()},
                   {"seed", c.seed},
                   {"repetitions", c.repetitions},
                   {"warmups", c.warmups},
                   {"max_blocks", c.max_blocks},
                   {"eval_limit", c.eval_limit},
                   {"nominal_token_seconds", c.nominal_token_seconds}};
  ordered_json cps = ordered_json::array();
  for (const auto& cp : c.checkpoints) cps.push_back({{"label", cp.label}, {"path", cp.path.string()}});
  cfg["checkpoints"] = cps;

  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row = metrics_object(r.metrics, false);
    row["checkpoint"] = r.checkpoint;
    row["timing"] = {{"nondeterministic", true},
                     {"tps_mean", r.tps_mean},
                     {"tps_std", r.tps_std},
                     {"rtf_analog_mean", r.rtf_mean},
                     {"rtf_analog_std", r.rtf_std},
                     {"wall_seconds_mean", r.wall_mean},
                     {"wall_seconds_std", r.wall_std},
                     {"first_chunk",
                      {{"runs", r.first_chunk.runs},
                       {"mean", latency_json(r.first_chunk.mean)},
                       {"std", latency_json(r.first_chunk.stddev)}}}};
    rows.push_back(std::move(row));
  }
  ordered_json doc{{"config", cfg},
                   {"nominal_token_seconds", c.nominal_token_seconds},
                   {"rows", rows}};
  return doc.dump(2);
}

}  // namespace blockmdm::bench
