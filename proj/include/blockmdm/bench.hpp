// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "blockmdm/blockdecode.hpp"
#include "blockmdm/synthtask.hpp"
#include "blockmdm/talker.hpp"

namespace blockmdm::bench {

// Mean confidence and entropy over the positions revealed at step j
// (1-based) across every decoded block.
struct StepStats {
  std::size_t step = 0;
  std::size_t positions = 0;
  double mean_confidence = 0.0;
  double mean_entropy = 0.0;
};

// Wall time split into contiguous stages of the first output block.
struct StageLatency {
  double semantics = 0.0;  // source embedding lookup and anchor alignment
  double talker = 0.0;     // K forward passes and reveals of block 0
  double post = 0.0;       // EOS scan and hand-off of the block
  double total = 0.0;
};

// Deterministic fields first; wall-clock fields vary run to run.
struct Metrics {
  std::size_t steps = 0;  // K
  std::size_t samples = 0;
  std::size_t tokens = 0;          // decoded positions (blocks x B)
  std::size_t emitted_tokens = 0;  // output tokens before EOS
  std::size_t forward_passes = 0;
  std::size_t blocks = 0;
  std::size_t edits = 0;
  std::size_t ref_tokens = 0;
  double error_rate = 0.0;  // total edits / total reference tokens
  std::vector<StepStats> per_step;

  double wall_seconds = 0.0;
  double tps = 0.0;
  double rtf_analog = 0.0;
};

// Decodes every sample's source and scores the output against the target
// with EOS removed. `outputs`, when given, receives the token sequences.
Metrics evaluate(const talker::Talker& model, std::span<const synth::SamplePair> samples,
                 std::size_t steps, std::size_t max_blocks, double nominal_token_seconds = 0.04,
                 std::vector<TokenSequence>* outputs = nullptr);

// Per-step confidence and entropy of the decoder at K steps.
std::vector<StepStats> uncertainty_profile(const talker::Talker& model,
                                           std::span<const synth::SamplePair> samples,
                                           std::size_t steps, std::size_t max_blocks);

struct StageSummary {
  StageLatency mean;
  StageLatency stddev;
  std::size_t runs = 0;
};

// Times the path from request to first completed block over each input,
// after `warmups` untimed runs.
StageSummary first_chunk_breakdown(const talker::Talker& model,
                                   std::span<const synth::SamplePair> samples, std::size_t steps,
                                   std::size_t max_blocks, std::size_t warmups = 2);

struct CheckpointRef {
  std::string label;
  std::filesystem::path path;
};

struct ExperimentConfig {
  std::vector<CheckpointRef> checkpoints;  // e.g. baseline, distilled
  std::vector<std::size_t> steps{16, 8, 4, 2, 1};
  std::filesystem::path eval_path;
  std::uint64_t seed = 0;
  std::size_t repetitions = 1;
  std::size_t warmups = 2;
  std::size_t max_blocks = 8;
  std::size_t eval_limit = 0;  // 0 = whole eval set
  double nominal_token_seconds = 0.04;

  // Throws ParameterError on an empty or non-positive step list, zero
  // repetitions, no checkpoints or a non-positive token duration.
  void validate() const;
};

struct SweepRow {
  std::string checkpoint;
  std::size_t steps = 0;
  Metrics metrics;  // deterministic fields from the first repetition
  double tps_mean = 0.0, tps_std = 0.0;
  double rtf_mean = 0.0, rtf_std = 0.0;
  double wall_mean = 0.0, wall_std = 0.0;
  StageSummary first_chunk;
};

struct SweepReport {
  ExperimentConfig config;
  std::vector<SweepRow> rows;
};

// Models are passed in already loaded; labels come from cfg.checkpoints.
// Throws LoadError when checkpoints disagree on V, d or B, or the eval
// corpus does not fit the models' vocabularies.
SweepReport bench_sweep(const ExperimentConfig& cfg, std::span<const talker::Talker> models,
                        std::span<const synth::SamplePair> eval);

// Loads checkpoints and the eval corpus named in cfg, then sweeps.
SweepReport bench_sweep(const ExperimentConfig& cfg);

// Fixed columns: checkpoint,K,tps,tps_std,rtf_analog,rtf_std,err_rate,
// conf_step1,entropy_step1,forward_passes,blocks,latency_stage_semantics,
// latency_stage_talker,latency_stage_post,latency_total
void write_sweep_csv(const SweepReport& report, std::ostream& out);

// Timing values sit under "timing" objects flagged "nondeterministic": true.
std::string sweep_json(const SweepReport& report);

std::string metrics_json(const Metrics& m, bool include_timing);

}  // namespace blockmdm::bench
