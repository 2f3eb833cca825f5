// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/diffusion_train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "blockmdm/errors.hpp"

namespace blockmdm::train {

std::size_t schedule_step(std::size_t remaining, std::size_t step, std::size_t steps) {
  if (steps == 0 || step == 0 || step > steps) {
    throw ParameterError("schedule_step: step " + std::to_string(step) + " outside [1, K=" +
                         std::to_string(steps) + "]");
  }
  if (remaining == 0) return 0;
  const std::size_t r = steps - step + 1;
  return (remaining + r - 1) / r;
}

double confidence(std::span<const double> logits_row) {
  const double lse = nd::log_sum_exp(logits_row);
  const double mx = *std::max_element(logits_row.begin(), logits_row.end());
  return std::exp(mx - lse);
}

Token argmax_emittable(std::span<const double> logits_row, const Vocabulary& vocab) {
  Token best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < logits_row.size(); ++c) {
    const auto tok = static_cast<Token>(c);
    if (!vocab.is_emittable(tok)) continue;
    if (logits_row[c] > best_v) {
      best_v = logits_row[c];
      best = tok;
    }
  }
  return best;
}

std::vector<std::size_t> top_confident(std::span<const std::size_t> candidates,
                                       std::span<const double> confidences, std::size_t n) {
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  std::sort(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidences[a] > confidences[b];
  });
  order.resize(std::min(n, order.size()));
  return order;
}

void DistillConfig::validate() const {
  if (steps < 1) throw ParameterError("DistillConfig: K must be >= 1");
  if (!(tau > 0.0)) throw ParameterError("DistillConfig: tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("DistillConfig: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
}

RolloutResult teacher_rollout(std::span<const Token> corrupted, const masking::MaskSet& mask,
                              const LogitsFn& teacher, const DistillConfig& cfg,
                              std::size_t block_size, const Vocabulary& vocab) {
  cfg.validate();
  if (mask.empty()) throw ContractError("teacher_rollout: empty masked set");
  const std::size_t t_len = corrupted.size();
  const auto part = masking::partition(t_len, block_size);
  for (std::size_t t : mask) {
    if (t >= t_len || corrupted[t] != vocab.mask()) {
      throw ContractError("teacher_rollout: position " + std::to_string(t) +
                          " in the masked set does not hold MASK");
    }
  }

  RolloutResult res;
  res.final_sequence.assign(corrupted.begin(), corrupted.end());
  res.targets.logits = nd::Matrix(t_len, vocab.size());
  res.targets.valid.assign(t_len, false);

  std::vector<std::vector<std::size_t>> pending(part.num_blocks());
  for (std::size_t t : mask) pending[part.block_of(t)].push_back(t);

  std::vector<double> conf(t_len, 0.0);
  for (std::size_t j = 1; j <= cfg.steps; ++j) {
    const nd::Matrix logits = teacher(res.final_sequence);
    ++res.forward_passes;
    if (logits.rows() != t_len || logits.cols() != vocab.size()) {
      throw DimensionError("teacher_rollout: teacher returned " + logits.shape_string());
    }
    std::vector<std::size_t> revealed;
    for (auto& block : pending) {
      const std::size_t n = schedule_step(block.size(), j, cfg.steps);
      if (n == 0) continue;
      for (std::size_t t : block) conf[t] = confidence(logits.row(t));
      const auto chosen = top_confident(block, conf, n);
      for (std::size_t t : chosen) {
        const auto row = logits.row(t);
        std::copy(row.begin(), row.end(), res.targets.logits.row(t).begin());
        res.targets.valid[t] = true;
        res.final_sequence[t] = argmax_emittable(row, vocab);
        revealed.push_back(t);
      }
      std::erase_if(block, [&](std::size_t t) { return res.targets.valid[t]; });
    }
    std::sort(revealed.begin(), revealed.end());
    res.revealed.push_back(std::move(revealed));
  }
  for (const auto& block : pending) {
    if (!block.empty()) {
      throw std::logic_error("teacher_rollout: position " + std::to_string(block.front()) +
                             " still masked after K iterations");
    }
  }
  return res;
}

nd::LossGrad mdm_loss(const nd::Matrix& logits, std::span<const Token> targets,
                      const masking::MaskSet& mask) {
  nd::LossGrad ce = nd::masked_cross_entropy(logits, targets, mask);
  if (!mask.empty()) {
    const double inv = 1.0 / static_cast<double>(mask.size());
    ce.value *= inv;
    ce.grad *= inv;
  }
  return ce;
}

DistillLoss distill_loss(const nd::Matrix& student_logits, const TeacherTargets& targets,
                         const masking::MaskSet& mask, std::span<const Token> reference,
                         const DistillConfig& cfg) {
  cfg.validate();
  for (std::size_t t : mask) {
    if (t >= targets.valid.size() || !targets.valid[t]) {
      throw ContractError("distill_loss: no teacher target at masked position " +
                          std::to_string(t));
    }
  }
  DistillLoss out;
  const nd::LossGrad kd = nd::kl_rows(student_logits, targets.logits, cfg.tau, cfg.direction, mask);
  const nd::LossGrad ce = mdm_loss(student_logits, reference, mask);
  out.kd = kd.value;
  out.mdm = ce.value;
  out.loss = cfg.alpha * kd.value + (1.0 - cfg.alpha) * ce.value;
  out.grad = nd::Matrix(student_logits.rows(), student_logits.cols());
  auto g = out.grad.flat();
  const auto gk = kd.grad.flat();
  const auto gc = ce.grad.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = cfg.alpha * gk[i] + (1.0 - cfg.alpha) * gc[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

double OptimizerConfig::lr_at(std::size_t step, std::size_t total_steps) const {
  double lr = adamw.lr;
  if (warmup_steps > 0 && step <= warmup_steps) {
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (cosine_decay && total_steps > warmup_steps) {
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
    lr *= min_lr_ratio + (1.0 - min_lr_ratio) * cosine;
  }
  return lr;
}

TokenSequence training_sequence(const synth::SamplePair& pair, std::size_t block_size, Token eos) {
  TokenSequence seq = pair.target;
  if (seq.empty() || seq.back() != eos) seq.push_back(eos);
  const std::size_t padded = (seq.size() + block_size - 1) / block_size * block_size;
  seq.resize(padded, eos);
  return seq;
}

namespace {

struct SampleOutcome {
  double loss = 0.0;
  double kd = 0.0;
  double mdm = 0.0;
};

// Computes the loss for one masked sample and accumulates gradients of
// loss / batch_size into the model.
using SampleFn = std::function<SampleOutcome(const synth::SamplePair& pair,
                                             const TokenSequence& clean,
                                             const TokenSequence& corrupted,
                                             const masking::MaskSet& mask, double weight)>;

TrainResult run_training(talker::Talker& model, std::span<const synth::SamplePair> data,
                         const TrainConfig& cfg, const SampleFn& sample_fn,
                         const ProgressFn& progress) {
  if (data.empty()) throw ParameterError("training: dataset is empty");
  if (cfg.batch_size == 0) throw ParameterError("training: batch_size must be >= 1");
  cfg.masking.validate();
  const auto& tc = model.config();
  nd::Rng rng(cfg.seed);
  std::vector<std::size_t> order = rng.permutation(data.size());
  std::size_t cursor = 0;
  auto params = model.params();
  TrainResult result;
  result.curve.reserve(cfg.steps);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    model.zero_grad();
    LossRecord rec;
    rec.step = step;
    const double weight = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order = rng.permutation(data.size());
        cursor = 0;
      }
      const synth::SamplePair& pair = data[order[cursor++]];
      const TokenSequence clean = training_sequence(pair, tc.block_size, tc.vocab.eos());
      const masking::MaskSet mask =
          masking::sample_mask(clean.size(), tc.block_size, cfg.masking, rng);
      TokenSequence corrupted = clean;
      for (std::size_t t : mask) corrupted[t] = tc.vocab.mask();
      const SampleOutcome out = sample_fn(pair, clean, corrupted, mask, weight);
      if (!std::isfinite(out.loss)) {
        throw NumericError("training: non-finite loss at step " + std::to_string(step) +
                           "; parameters hold the last good state");
      }
      rec.loss += weight * out.loss;
      rec.kd_loss += weight * out.kd;
      rec.mdm_loss += weight * out.mdm;
    }
    nd::AdamWConfig opt = cfg.optimizer.adamw;
    opt.lr = cfg.optimizer.lr_at(step, cfg.steps);
    nd::adamw_step(params, opt, step);
    result.curve.push_back(rec);
    if (progress) progress(rec);
  }
  return result;
}

}  // namespace

TrainResult train_mdm(talker::Talker& model, std::span<const synth::SamplePair> data,
                      const TrainConfig& cfg, const ProgressFn& progress) {
  const SampleFn fn = [&model](const synth::SamplePair& pair, const TokenSequence& clean,
                               const TokenSequence& corrupted, const masking::MaskSet& mask,
                               double weight) {
    SampleOutcome out;
    if (mask.empty()) return out;
    const auto cond = model.condition(pair.source, clean.size());
    talker::ForwardCache cache;
    const nd::Matrix logits = model.forward(corrupted, cond, &cache);
    nd::LossGrad ce = mdm_loss(logits, clean, mask);
    out.loss = ce.value;
    out.mdm = ce.value;
    if (std::isfinite(out.loss)) {
      ce.grad *= weight;
      model.backward(cache, ce.grad);
    }
    return out;
  };
  return run_training(model, data, cfg, fn, progress);
}

TrainResult train_distill(talker::Talker& student, const talker::Talker& teacher,
                          std::span<const synth::SamplePair> data, const TrainConfig& cfg,
                          const DistillConfig& distill, const ProgressFn& progress) {
  distill.validate();
  talker::require_compatible(student.config(), teacher.config(), "train_distill");
  const auto& vocab = student.config().vocab;
  const std::size_t block = student.config().block_size;
  const SampleFn fn = [&](const synth::SamplePair& pair, const TokenSequence& clean,
                          const TokenSequence& corrupted, const masking::MaskSet& mask,
                          double weight) {
    SampleOutcome out;
    if (mask.empty()) return out;
    const auto teacher_cond = teacher.condition(pair.source, clean.size());
    const LogitsFn teacher_fn = [&](std::span<const Token> seq) {
      return teacher.forward(seq, teacher_cond);
    };
    const RolloutResult rollout =
        teacher_rollout(corrupted, mask, teacher_fn, distill, block, vocab);

    const auto cond = student.condition(pair.source, clean.size());
    talker::ForwardCache cache;
    const nd::Matrix logits = student.forward(corrupted, cond, &cache);
    DistillLoss dl = distill_loss(logits, rollout.targets, mask, clean, distill);
    out.loss = dl.loss;
    out.kd = dl.kd;
    out.mdm = dl.mdm;
    if (std::isfinite(out.loss)) {
      dl.grad *= weight;
      student.backward(cache, dl.grad);
    }
    return out;
  };
  return run_training(student, data, cfg, fn, progress);
}

nd::GradCheckReport gradcheck_talker(const GradCheckSetup& setup) {
  talker::TalkerConfig tc;
  tc.width = setup.width;
  tc.layers = setup.layers;
  tc.heads = setup.heads;
  tc.ff_width = 4 * setup.width;
  tc.fusion_width = 4 * setup.width;
  tc.block_size = setup.block_size;
  tc.anchors_per_block = std::min<std::size_t>(4, setup.block_size);
  tc.max_len = setup.length;
  tc.vocab.data_size = 16;
  tc.source_vocab = 8;
  tc.validate();

  nd::Rng rng(setup.seed);
  talker::Talker model(tc);
  model.init(rng, /*zero_head=*/false);

  const std::size_t n_src = std::max<std::size_t>(1, setup.length / setup.block_size * 2);
  TokenSequence source(n_src);
  for (auto& s : source) s = static_cast<Token>(rng.below(tc.source_vocab));
  TokenSequence clean(setup.length);
  for (auto& t : clean) t = static_cast<Token>(rng.below(tc.vocab.data_size));
  masking::MaskSet mask;
  TokenSequence corrupted = clean;
  for (std::size_t t = 0; t < setup.length; ++t) {
    if (rng.bernoulli(0.5)) {
      mask.push_back(t);
      corrupted[t] = tc.vocab.mask();
    }
  }
  if (mask.empty()) {
    mask.push_back(0);
    corrupted[0] = tc.vocab.mask();
  }
  TeacherTargets teacher;
  teacher.logits = nd::Matrix(setup.length, tc.vocab.size());
  for (double& z : teacher.logits.flat()) z = 2.0 * rng.normal();
  teacher.valid.assign(setup.length, false);
  for (std::size_t t : mask) teacher.valid[t] = true;
  const DistillConfig dcfg{1, 2.0, 0.5, nd::KlDirection::reverse};

  const nd::LossClosure loss = [&](bool with_grad) {
    const auto cond = model.condition(source, setup.length);
    talker::ForwardCache cache;
    const nd::Matrix logits = model.forward(corrupted, cond, with_grad ? &cache : nullptr);
    DistillLoss dl = distill_loss(logits, teacher, mask, clean, dcfg);
    // Undo the |M| normalisation so gradients stay well above round-off.
    const double scale = static_cast<double>(mask.size());
    if (with_grad) {
      model.zero_grad();
      dl.grad *= scale;
      model.backward(cache, dl.grad);
    }
    return dl.loss * scale;
  };
  auto params = model.params();
  nd::Rng pick = rng.fork(1);
  return nd::grad_check(loss, params, setup.epsilon, setup.samples_per_param, pick,
                        setup.abs_floor);
}

void write_loss_csv(std::span<const LossRecord> curve, std::ostream& out) {
  out << "step,loss,kd_loss,mdm_loss\n";
  const auto old = out.precision(17);
  for (const auto& r : curve) {
    out << r.step << "," << r.loss << "," << r.kd_loss << "," << r.mdm_loss << "\n";
  }
  out.precision(old);
}

}  // namespace blockmdm::train
