// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "blockmdm/masking.hpp"
#include "blockmdm/nd/matrix.hpp"
#include "blockmdm/nd/ops.hpp"
#include "blockmdm/nd/optim.hpp"
#include "blockmdm/synthtask.hpp"
#include "blockmdm/talker.hpp"
#include "blockmdm/vocab.hpp"

namespace blockmdm::train {

// Logits (T x V) of some mask predictor for a token sequence. Lets the
// rollout and the decoder run against the talker or a scripted stand-in.
using LogitsFn = std::function<nd::Matrix(std::span<const Token>)>;

// Even-allocation schedule: with R masked positions left at 1-based step j of
// K, reveal ceil(R / (K - j + 1)) positions, or none when R = 0. Throws
// ParameterError unless 1 <= j <= K.
std::size_t schedule_step(std::size_t remaining, std::size_t step, std::size_t steps);

// Maximum softmax probability of a logits row.
double confidence(std::span<const double> logits_row);

// Highest-logit token among data tokens and EOS (MASK and PAD never win).
Token argmax_emittable(std::span<const double> logits_row, const Vocabulary& vocab);

// The n positions of `candidates` with the highest confidence; ties go to
// the lowest position index. Result is in selection order.
std::vector<std::size_t> top_confident(std::span<const std::size_t> candidates,
                                       std::span<const double> confidences, std::size_t n);

struct DistillConfig {
  std::size_t steps = 4;  // K teacher iterations
  double tau = 2.0;
  double alpha = 0.7;
  nd::KlDirection direction = nd::KlDirection::reverse;

  void validate() const;
};

// Teacher logits recorded at the iteration in which each position was
// revealed; valid[t] is true exactly on the masked set.
struct TeacherTargets {
  nd::Matrix logits;
  std::vector<bool> valid;
};

struct RolloutResult {
  TeacherTargets targets;
  TokenSequence final_sequence;
  std::size_t forward_passes = 0;
  std::vector<std::vector<std::size_t>> revealed;  // per iteration, ascending
};

// K iterations over the whole sequence; in every iteration each block
// independently reveals its top-n_j masked positions (argmax tokens) and
// records their current logits. Throws ContractError when `mask` is empty or
// a position in it does not hold MASK, and std::logic_error if anything is
// still masked after K iterations.
RolloutResult teacher_rollout(std::span<const Token> corrupted, const masking::MaskSet& mask,
                              const LogitsFn& teacher, const DistillConfig& cfg,
                              std::size_t block_size, const Vocabulary& vocab);

struct DistillLoss {
  double loss = 0.0;
  double kd = 0.0;
  double mdm = 0.0;
  nd::Matrix grad;  // d loss / d student logits
};

// Cross-entropy over the masked set, divided by |M| (0 for an empty set).
nd::LossGrad mdm_loss(const nd::Matrix& logits, std::span<const Token> targets,
                      const masking::MaskSet& mask);

// alpha * KD + (1 - alpha) * MDM with KD = tau^2 / |M| * sum KL and MDM the
// |M|-normalised cross-entropy on the same set.
DistillLoss distill_loss(const nd::Matrix& student_logits, const TeacherTargets& targets,
                         const masking::MaskSet& mask, std::span<const Token> reference,
                         const DistillConfig& cfg);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  nd::AdamWConfig adamw{1e-3, 0.9, 0.999, 1e-8, 0.01, 1.0};
  std::size_t warmup_steps = 100;
  bool cosine_decay = true;
  double min_lr_ratio = 0.1;

  double lr_at(std::size_t step, std::size_t total_steps) const;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  masking::MaskingConfig masking{};
  OptimizerConfig optimizer{};
  std::uint64_t seed = 0;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double kd_loss = 0.0;
  double mdm_loss = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
};

using ProgressFn = std::function<void(const LossRecord&)>;

// Talker input for a pair: the target padded with EOS up to a whole number
// of blocks, so every position the decoder visits before stopping has a
// training signal.
TokenSequence training_sequence(const synth::SamplePair& pair, std::size_t block_size, Token eos);

// Masked diffusion training on the |M|-normalised cross-entropy. Batches draw
// pairs in a seeded shuffled order; masks come from cfg.masking. Throws
// NumericError on a non-finite loss or gradient, leaving `model` at the last
// good parameters.
TrainResult train_mdm(talker::Talker& model, std::span<const synth::SamplePair> data,
                      const TrainConfig& cfg, const ProgressFn& progress = {});

// Self-distillation: per sample, the frozen teacher rolls out K iterations
// from the masked input and the student matches the collected logits in one
// forward pass on that same input. Consumes randomness exactly like
// train_mdm, so alpha = 0 reproduces its loss curve.
TrainResult train_distill(talker::Talker& student, const talker::Talker& teacher,
                          std::span<const synth::SamplePair> data, const TrainConfig& cfg,
                          const DistillConfig& distill, const ProgressFn& progress = {});

// Gradient check of the full talker (fusion, embeddings, every layer, head)
// on one random sequence: the loss mixes masked cross-entropy with a reverse
// KL term so both training objectives are exercised.
struct GradCheckSetup {
  std::size_t width = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t length = 32;
  std::size_t block_size = 8;
  std::size_t samples_per_param = 1 << 20;  // effectively every coordinate
  double epsilon = 1e-5;
  // Denominator floor: gradients that are structurally zero (key biases under
  // softmax shift invariance) are judged on absolute error instead.
  double abs_floor = 1e-3;
  std::uint64_t seed = 0;
};

nd::GradCheckReport gradcheck_talker(const GradCheckSetup& setup);

// CSV with header "step,loss,kd_loss,mdm_loss", full precision.
void write_loss_csv(std::span<const LossRecord> curve, std::ostream& out);

}  // namespace blockmdm::train
