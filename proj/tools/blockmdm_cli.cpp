// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand accepts `--config file.json`; the
// document's keys are long flag names (optionally nested under the
// subcommand's name) and flags given on the command line override them.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blockmdm/bench.hpp"
#include "blockmdm/blockdecode.hpp"
#include "blockmdm/diffusion_train.hpp"
#include "blockmdm/masking.hpp"
#include "blockmdm/synthtask.hpp"
#include "blockmdm/talker.hpp"
#include "json.hpp"

namespace {

using namespace blockmdm;
using nlohmann::ordered_json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for semantic usage problems found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// JSON config to argument list
// ---------------------------------------------------------------------------

std::string scalar_text(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  throw UsageError("config: unsupported value " + v.dump());
}

// Arrays of scalars become one comma-joined value; arrays of objects with
// "label" and "path" become repeated label=path values.
std::vector<std::string> config_args(const std::string& path, const std::string& subcommand) {
  std::ifstream in(path);
  if (!in) throw LoadError("config: cannot open '" + path + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw InputError("config: " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw InputError("config: top level must be an object");
  if (doc.contains(subcommand) && doc[subcommand].is_object()) doc = doc[subcommand];
  std::vector<std::string> args;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object()) continue;  // another subcommand's section
    const std::string flag = "--" + key;
    if (value.is_array()) {
      if (!value.empty() && value.front().is_object()) {
        for (const auto& item : value) {
          args.push_back(flag + "=" + item.at("label").get<std::string>() + "=" +
                         item.at("path").get<std::string>());
        }
      } else {
        std::string joined;
        for (const auto& item : value) joined += (joined.empty() ? "" : ",") + scalar_text(item);
        args.push_back(flag + "=" + joined);
      }
    } else if (!value.is_null()) {
      args.push_back(flag + "=" + scalar_text(value));
    }
  }
  return args;
}

// Finds `--config` in the subcommand's arguments.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

void add_masking_options(CLI::App& app, masking::MaskingConfig& m, std::string& mode) {
  app.add_option("--masking", mode, "global | hierarchical")->capture_default_str();
  app.add_option("--global-lo", m.global.lo, "lower bound of the global ratio")->capture_default_str();
  app.add_option("--global-hi", m.global.hi, "upper bound of the global ratio")->capture_default_str();
  app.add_option("--block-lo", m.block.lo, "lower bound of the block-selection ratio")
      ->capture_default_str();
  app.add_option("--block-hi", m.block.hi, "upper bound of the block-selection ratio")
      ->capture_default_str();
  app.add_option("--token-lo", m.token.lo, "lower bound of the in-block ratio")->capture_default_str();
  app.add_option("--token-hi", m.token.hi, "upper bound of the in-block ratio")->capture_default_str();
}

struct OptimizerFlags {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip = 1.0;
  std::size_t warmup = 100;
  bool cosine = true;
  double min_lr_ratio = 0.1;
};

void add_train_options(CLI::App& app, train::TrainConfig& t, OptimizerFlags& o) {
  app.add_option("--steps", t.steps, "optimizer steps")->capture_default_str();
  app.add_option("--batch-size", t.batch_size, "sequences per step")->capture_default_str();
  app.add_option("--seed", t.seed, "shuffle and masking seed")->capture_default_str();
  app.add_option("--lr", o.lr, "peak learning rate")->capture_default_str();
  app.add_option("--weight-decay", o.weight_decay, "AdamW weight decay")->capture_default_str();
  app.add_option("--clip", o.clip, "global gradient-norm clip, 0 disables")->capture_default_str();
  app.add_option("--warmup", o.warmup, "linear warm-up steps")->capture_default_str();
  app.add_option("--cosine", o.cosine, "cosine decay after warm-up")->capture_default_str();
  app.add_option("--min-lr-ratio", o.min_lr_ratio, "floor of the cosine decay")
      ->capture_default_str();
}

void apply_optimizer(const OptimizerFlags& o, train::TrainConfig& t) {
  t.optimizer.adamw.lr = o.lr;
  t.optimizer.adamw.weight_decay = o.weight_decay;
  t.optimizer.adamw.clip_norm = o.clip;
  t.optimizer.warmup_steps = o.warmup;
  t.optimizer.cosine_decay = o.cosine;
  t.optimizer.min_lr_ratio = o.min_lr_ratio;
}

ordered_json talker_config_json(const talker::TalkerConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"width", c.width},
          {"ff_width", c.ff_width},
          {"fusion_width", c.fusion_width},
          {"data_vocab", c.vocab.data_size},
          {"block_size", c.block_size},
          {"anchors_per_block", c.anchors_per_block},
          {"max_len", c.max_len},
          {"source_vocab", c.source_vocab}};
}

ordered_json masking_json(const masking::MaskingConfig& m) {
  return {{"mode", masking::to_string(m.mode)},
          {"global", {m.global.lo, m.global.hi}},
          {"block", {m.block.lo, m.block.hi}},
          {"token", {m.token.lo, m.token.hi}}};
}

ordered_json train_json(const train::TrainConfig& t) {
  const auto& o = t.optimizer;
  return {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"lr", o.adamw.lr},
          {"weight_decay", o.adamw.weight_decay},
          {"clip", o.adamw.clip_norm},
          {"warmup", o.warmup_steps},
          {"cosine", o.cosine_decay},
          {"min_lr_ratio", o.min_lr_ratio},
          {"masking", masking_json(t.masking)}};
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw LoadError("write to '" + path + "' failed");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + path + "' for writing");
  return out;
}

void check_corpus_fits(const synth::Corpus& corpus, const talker::TalkerConfig& tc) {
  if (corpus.spec.vocab.data_size != tc.vocab.data_size ||
      corpus.spec.source_vocab != tc.source_vocab) {
    throw LoadError("corpus vocabularies (data " + std::to_string(corpus.spec.vocab.data_size) +
                    ", source " + std::to_string(corpus.spec.source_vocab) +
                    ") differ from the checkpoint's (data " +
                    std::to_string(tc.vocab.data_size) + ", source " +
                    std::to_string(tc.source_vocab) + ")");
  }
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& p = corpus.samples[i];
    const std::size_t padded =
        (p.target.size() + tc.block_size - 1) / tc.block_size * tc.block_size;
    if (padded > tc.max_len) {
      throw ParameterError("corpus record " + std::to_string(i) + " needs " +
                           std::to_string(padded) + " positions, above max_len " +
                           std::to_string(tc.max_len));
    }
  }
}

train::ProgressFn progress_printer(std::size_t every, std::size_t total) {
  if (every == 0) return {};
  return [every, total](const train::LossRecord& r) {
    if (r.step % every == 0 || r.step == total) {
      std::fprintf(stderr, "step %zu/%zu loss %.6f kd %.6f mdm %.6f\n", r.step, total, r.loss,
                   r.kd_loss, r.mdm_loss);
    }
  };
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenDataArgs {
  synth::TaskSpec spec;
  std::size_t count = 4000;
  std::size_t n_min = 4, n_max = 12;
  std::uint64_t seed = 0;
  std::string out;
};

void setup_gen_data(CLI::App& app, GenDataArgs& a) {
  app.add_option("--out", a.out, "corpus file to write")->required();
  app.add_option("--count", a.count, "records")->capture_default_str();
  app.add_option("--n-min", a.n_min, "shortest source")->capture_default_str();
  app.add_option("--n-max", a.n_max, "longest source")->capture_default_str();
  app.add_option("--source-vocab", a.spec.source_vocab)->capture_default_str();
  app.add_option("--data-vocab", a.spec.vocab.data_size)->capture_default_str();
  app.add_option("--upsample", a.spec.upsample)->capture_default_str();
  app.add_option("--grammar-seed", a.spec.grammar_seed)->capture_default_str();
  app.add_option("--noise", a.spec.noise, "substitution rate")->capture_default_str();
  app.add_option("--seed", a.seed, "sampling seed")->capture_default_str();
}

int run_gen_data(const GenDataArgs& a) {
  nd::Rng rng(a.seed);
  synth::Corpus c;
  c.spec = a.spec;
  c.samples = synth::gen_dataset(a.spec, a.count, a.n_min, a.n_max, rng);
  synth::write_corpus(c, std::filesystem::path(a.out));
  std::cout << "wrote " << c.samples.size() << " records to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, init_from, loss_csv, report;
  talker::TalkerConfig model;
  std::size_t ff_width = 0, fusion_width = 0;  // 0 = 4 x width
  std::uint64_t init_seed = 0;
  train::TrainConfig train;
  OptimizerFlags opt;
  std::string mode = "global";
  std::size_t log_every = 100;
};

void setup_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--data", a.data, "training corpus")->required();
  app.add_option("--out", a.out, "checkpoint to write")->required();
  app.add_option("--init-from", a.init_from, "continue from this checkpoint");
  app.add_option("--loss-csv", a.loss_csv, "per-step loss curve");
  app.add_option("--report", a.report, "JSON run report");
  app.add_option("--layers", a.model.layers)->capture_default_str();
  app.add_option("--heads", a.model.heads)->capture_default_str();
  app.add_option("--width", a.model.width)->capture_default_str();
  app.add_option("--ff-width", a.ff_width, "feed-forward width, 0 = 4 x width");
  app.add_option("--fusion-width", a.fusion_width, "fusion hidden width, 0 = 4 x width");
  app.add_option("--block-size", a.model.block_size)->capture_default_str();
  app.add_option("--anchors", a.model.anchors_per_block)->capture_default_str();
  app.add_option("--max-len", a.model.max_len)->capture_default_str();
  app.add_option("--init-seed", a.init_seed, "weight initialisation seed")->capture_default_str();
  app.add_option("--log-every", a.log_every, "progress interval, 0 silences")->capture_default_str();
  add_train_options(app, a.train, a.opt);
  add_masking_options(app, a.train.masking, a.mode);
}

int run_train(TrainArgs& a) {
  a.train.masking.mode = masking::masking_mode_from_string(a.mode);
  apply_optimizer(a.opt, a.train);
  const synth::Corpus corpus = synth::read_corpus(std::filesystem::path(a.data));
  std::optional<talker::Talker> model;
  if (!a.init_from.empty()) {
    model.emplace(talker::load_checkpoint(std::filesystem::path(a.init_from)));
  } else {
    a.model.ff_width = a.ff_width ? a.ff_width : 4 * a.model.width;
    a.model.fusion_width = a.fusion_width ? a.fusion_width : 4 * a.model.width;
    a.model.vocab = corpus.spec.vocab;
    a.model.source_vocab = corpus.spec.source_vocab;
    model.emplace(a.model);
    nd::Rng rng(a.init_seed);
    model->init(rng);
  }
  check_corpus_fits(corpus, model->config());
  const auto result =
      train::train_mdm(*model, corpus.samples, a.train, progress_printer(a.log_every, a.train.steps));
  talker::save_checkpoint(*model, std::filesystem::path(a.out));
  if (!a.loss_csv.empty()) {
    auto out = open_out(a.loss_csv);
    train::write_loss_csv(result.curve, out);
  }
  ordered_json rep{{"command", "train"},
                   {"data", a.data},
                   {"init_from", a.init_from},
                   {"init_seed", a.init_seed},
                   {"model", talker_config_json(model->config())},
                   {"parameters", model->parameter_count()},
                   {"train", train_json(a.train)},
                   {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().loss},
                   {"checksum", model->checksum()}};
  if (!a.report.empty()) write_text(a.report, rep.dump(2) + "\n");
  std::cout << "final loss " << rep["final_loss"].get<double>() << ", checkpoint " << a.out
            << "\n";
  return 0;
}

struct DistillArgs {
  std::string data, teacher, student, out, loss_csv, report;
  train::TrainConfig train;
  OptimizerFlags opt;
  train::DistillConfig distill;
  std::string mode = "hierarchical";
  std::string kl = "reverse";
  std::size_t log_every = 100;
};

void setup_distill(CLI::App& app, DistillArgs& a) {
  app.add_option("--data", a.data, "training corpus")->required();
  app.add_option("--teacher", a.teacher, "frozen teacher checkpoint")->required();
  app.add_option("--student", a.student, "student initialisation, defaults to the teacher");
  app.add_option("--out", a.out, "student checkpoint to write")->required();
  app.add_option("--loss-csv", a.loss_csv, "per-step loss curve");
  app.add_option("--report", a.report, "JSON run report");
  app.add_option("--kd-steps", a.distill.steps, "teacher rollout steps K")->capture_default_str();
  app.add_option("--tau", a.distill.tau, "distillation temperature")->capture_default_str();
  app.add_option("--alpha", a.distill.alpha, "weight of the KD term")->capture_default_str();
  app.add_option("--kl", a.kl, "reverse | forward")->capture_default_str();
  app.add_option("--log-every", a.log_every, "progress interval, 0 silences")->capture_default_str();
  add_train_options(app, a.train, a.opt);
  add_masking_options(app, a.train.masking, a.mode);
}

int run_distill(DistillArgs& a) {
  a.train.masking.mode = masking::masking_mode_from_string(a.mode);
  apply_optimizer(a.opt, a.train);
  if (a.kl == "reverse") {
    a.distill.direction = nd::KlDirection::reverse;
  } else if (a.kl == "forward") {
    a.distill.direction = nd::KlDirection::forward;
  } else {
    throw ParameterError("--kl must be 'reverse' or 'forward', got '" + a.kl + "'");
  }
  a.distill.validate();
  const synth::Corpus corpus = synth::read_corpus(std::filesystem::path(a.data));
  const talker::Talker teacher = talker::load_checkpoint(std::filesystem::path(a.teacher));
  talker::Talker student =
      a.student.empty() ? teacher : talker::load_checkpoint(std::filesystem::path(a.student));
  check_corpus_fits(corpus, student.config());
  const auto result = train::train_distill(student, teacher, corpus.samples, a.train, a.distill,
                                           progress_printer(a.log_every, a.train.steps));
  talker::save_checkpoint(student, std::filesystem::path(a.out));
  if (!a.loss_csv.empty()) {
    auto out = open_out(a.loss_csv);
    train::write_loss_csv(result.curve, out);
  }
  ordered_json rep{{"command", "distill"},
                   {"data", a.data},
                   {"teacher", a.teacher},
                   {"student", a.student.empty() ? a.teacher : a.student},
                   {"model", talker_config_json(student.config())},
                   {"train", train_json(a.train)},
                   {"distill",
                    {{"kd_steps", a.distill.steps},
                     {"tau", a.distill.tau},
                     {"alpha", a.distill.alpha},
                     {"kl", a.kl}}},
                   {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().loss},
                   {"checksum", student.checksum()}};
  if (!a.report.empty()) write_text(a.report, rep.dump(2) + "\n");
  std::cout << "final loss " << rep["final_loss"].get<double>() << ", checkpoint " << a.out
            << "\n";
  return 0;
}

struct DecodeArgs {
  std::string checkpoint, source, input, out = "-", trace;
  std::size_t steps = 4;
  std::size_t max_blocks = 16;
  std::size_t limit = 0;
};

void setup_decode(CLI::App& app, DecodeArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "talker checkpoint");
  app.add_option("--source", a.source, "comma-separated source ids");
  app.add_option("--input", a.input, "corpus whose sources are decoded");
  app.add_option("--limit", a.limit, "decode only the first N records, 0 = all");
  app.add_option("--steps", a.steps, "refinement steps K per block")->capture_default_str();
  app.add_option("--max-blocks", a.max_blocks)->capture_default_str();
  app.add_option("--out", a.out, "token output, '-' for stdout")->capture_default_str();
  app.add_option("--trace", a.trace, "decode trace JSON");
}

TokenSequence parse_ids(const std::string& text) {
  TokenSequence out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 0) {
      throw ParameterError("bad id '" + item + "' in list '" + text + "'");
    }
    out.push_back(static_cast<Token>(v));
  }
  if (out.empty()) throw ParameterError("empty id list");
  return out;
}

ordered_json trace_json(const decode::DecodeResult& res) {
  ordered_json blocks = ordered_json::array();
  ordered_json timing = ordered_json::array();
  for (const auto& b : res.trace.blocks) {
    ordered_json steps = ordered_json::array();
    ordered_json step_seconds = ordered_json::array();
    for (const auto& s : b.steps) {
      steps.push_back(
          {{"revealed", s.revealed}, {"confidences", s.confidences}, {"entropies", s.entropies}});
      step_seconds.push_back(s.seconds);
    }
    blocks.push_back({{"index", b.index},
                      {"begin", b.begin},
                      {"forward_passes", b.forward_passes},
                      {"steps", steps}});
    timing.push_back({{"start_seconds", b.start_seconds},
                      {"end_seconds", b.end_seconds},
                      {"step_seconds", step_seconds}});
  }
  return {{"tokens", res.tokens},
          {"ended_with_eos", res.ended_with_eos},
          {"truncated_by_limit", res.truncated_by_limit},
          {"forward_passes", res.trace.forward_passes},
          {"blocks", blocks},
          {"timing",
           {{"nondeterministic", true},
            {"total_seconds", res.trace.total_seconds},
            {"blocks", timing}}}};
}

int run_decode(const DecodeArgs& a) {
  decode::DecodeConfig cfg;
  cfg.steps = a.steps;
  cfg.max_blocks = a.max_blocks;
  cfg.validate();
  if (a.checkpoint.empty()) throw UsageError("decode: --checkpoint is required");
  if (a.source.empty() == a.input.empty()) {
    throw UsageError("decode: give exactly one of --source and --input");
  }
  const talker::Talker model = talker::load_checkpoint(std::filesystem::path(a.checkpoint));
  cfg.block_size = model.config().block_size;
  cfg.eos = model.config().vocab.eos();

  std::vector<TokenSequence> sources;
  if (!a.source.empty()) {
    sources.push_back(parse_ids(a.source));
  } else {
    const auto corpus = synth::read_corpus(std::filesystem::path(a.input));
    for (const auto& p : corpus.samples) {
      if (a.limit > 0 && sources.size() == a.limit) break;
      sources.push_back(p.source);
    }
  }
  for (const auto& src : sources) {
    for (Token s : src) {
      if (static_cast<std::size_t>(s) >= model.config().source_vocab) {
        throw InputError("decode: source id " + std::to_string(s) +
                         " outside the checkpoint's source_vocab " +
                         std::to_string(model.config().source_vocab));
      }
    }
  }

  std::ostringstream tokens;
  ordered_json traces = ordered_json::array();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto res = decode::decode_talker(model, sources[i], cfg);
    if (i > 0) tokens << "\n";
    for (Token t : res.tokens) tokens << t << "\n";
    traces.push_back(trace_json(res));
  }
  write_text(a.out, tokens.str());
  if (!a.trace.empty()) {
    ordered_json doc{{"checkpoint", a.checkpoint},
                     {"K", cfg.steps},
                     {"B", cfg.block_size},
                     {"max_blocks", cfg.max_blocks},
                     {"records", traces}};
    write_text(a.trace, doc.dump(2) + "\n");
  }
  return 0;
}

struct BenchArgs {
  std::vector<std::string> checkpoints;
  std::string steps = "16,8,4,2,1";
  std::string eval, csv, json;
  bench::ExperimentConfig cfg;
};

void setup_bench(CLI::App& app, BenchArgs& a) {
  app.add_option("--checkpoint", a.checkpoints, "label=path, repeatable");
  app.add_option("--eval", a.eval, "eval corpus")->required();
  app.add_option("--steps", a.steps, "comma-separated K list")->capture_default_str();
  app.add_option("--seed", a.cfg.seed, "recorded in the report")->capture_default_str();
  app.add_option("--repetitions", a.cfg.repetitions)->capture_default_str();
  app.add_option("--warmups", a.cfg.warmups)->capture_default_str();
  app.add_option("--max-blocks", a.cfg.max_blocks)->capture_default_str();
  app.add_option("--eval-limit", a.cfg.eval_limit, "0 = whole eval set")->capture_default_str();
  app.add_option("--token-seconds", a.cfg.nominal_token_seconds, "nominal duration per token")
      ->capture_default_str();
  app.add_option("--csv", a.csv, "CSV report");
  app.add_option("--json", a.json, "JSON report");
}

int run_bench(BenchArgs& a) {
  a.cfg.steps.clear();
  for (Token k : parse_ids(a.steps)) a.cfg.steps.push_back(static_cast<std::size_t>(k));
  a.cfg.eval_path = a.eval;
  a.cfg.checkpoints.clear();
  for (const auto& spec : a.checkpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("bench: --checkpoint expects label=path, got '" + spec + "'");
    }
    a.cfg.checkpoints.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
  }
  const auto report = bench::bench_sweep(a.cfg);
  std::ostringstream csv;
  bench::write_sweep_csv(report, csv);
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  if (!a.json.empty()) write_text(a.json, bench::sweep_json(report) + "\n");
  if (a.csv.empty() && a.json.empty()) std::cout << csv.str();
  return 0;
}

struct MaskStatsArgs {
  masking::MaskingConfig cfg;
  std::string mode = "hierarchical";
  std::size_t length = 256, block_size = 16, samples = 10000;
  double delta = 0.2;
  std::uint64_t seed = 0;
  std::string json, csv;
};

void setup_maskstats(CLI::App& app, MaskStatsArgs& a) {
  add_masking_options(app, a.cfg, a.mode);
  app.add_option("--length", a.length, "sequence length T")->capture_default_str();
  app.add_option("--block-size", a.block_size, "block size B")->capture_default_str();
  app.add_option("--samples", a.samples)->capture_default_str();
  app.add_option("--delta", a.delta, "deviation for the concentration check")
      ->capture_default_str();
  app.add_option("--seed", a.seed)->capture_default_str();
  app.add_option("--json", a.json, "JSON report, '-' for stdout");
  app.add_option("--csv", a.csv, "ratio histogram CSV");
}

int run_maskstats(MaskStatsArgs& a) {
  a.cfg.mode = masking::masking_mode_from_string(a.mode);
  a.cfg.validate();
  nd::Rng rng(a.seed);
  const auto r = masking::mask_stats(masking::partition(a.length, a.block_size), a.cfg, rng,
                                     a.samples, a.delta);
  ordered_json doc{{"masking", masking_json(a.cfg)},
                   {"seed", a.seed},
                   {"samples", r.samples},
                   {"length", r.length},
                   {"block_size", r.block_size},
                   {"num_blocks", r.num_blocks},
                   {"mean_fraction", r.mean_fraction},
                   {"analytic_fraction", r.analytic_fraction},
                   {"ratio_histogram", r.ratio_histogram}};
  if (a.cfg.mode == masking::MaskingMode::hierarchical) {
    doc["full_blocks_checked"] = r.full_blocks_checked;
    doc["quantization_violations"] = r.quantization_violations;
  } else {
    doc["delta"] = r.delta;
    doc["hoeffding_tail_frequency"] = r.hoeffding_tail_frequency;
    doc["hoeffding_bound"] = r.hoeffding_bound;
  }
  if (!a.csv.empty()) {
    std::ostringstream csv;
    csv << "bin,count\n";
    for (std::size_t b = 0; b < r.ratio_histogram.size(); ++b) {
      csv << b << "," << r.ratio_histogram[b] << "\n";
    }
    write_text(a.csv, csv.str());
  }
  write_text(a.json.empty() ? "-" : a.json, doc.dump(2) + "\n");
  return 0;
}

struct GradCheckArgs {
  train::GradCheckSetup setup;
  double tolerance = 1e-5;
  std::string json;
};

void setup_gradcheck(CLI::App& app, GradCheckArgs& a) {
  app.add_option("--seed", a.setup.seed)->capture_default_str();
  app.add_option("--width", a.setup.width)->capture_default_str();
  app.add_option("--layers", a.setup.layers)->capture_default_str();
  app.add_option("--heads", a.setup.heads)->capture_default_str();
  app.add_option("--length", a.setup.length)->capture_default_str();
  app.add_option("--block-size", a.setup.block_size)->capture_default_str();
  app.add_option("--samples-per-param", a.setup.samples_per_param)->capture_default_str();
  app.add_option("--epsilon", a.setup.epsilon, "central-difference step")->capture_default_str();
  app.add_option("--abs-floor", a.setup.abs_floor, "denominator floor")->capture_default_str();
  app.add_option("--tolerance", a.tolerance, "exit 1 above this error")->capture_default_str();
  app.add_option("--json", a.json, "JSON report");
}

int run_gradcheck(const GradCheckArgs& a) {
  const auto r = train::gradcheck_talker(a.setup);
  const bool ok = r.max_rel_error < a.tolerance;
  std::printf("max relative error %.3e over %zu coordinates (worst %s[%zu], max abs %.3e) %s\n",
              r.max_rel_error, r.checked, r.worst_param.c_str(), r.worst_index, r.max_abs_error,
              ok ? "ok" : "FAILED");
  if (!a.json.empty()) {
    const auto& s = a.setup;
    ordered_json doc{{"seed", s.seed},
                     {"width", s.width},
                     {"layers", s.layers},
                     {"heads", s.heads},
                     {"length", s.length},
                     {"block_size", s.block_size},
                     {"epsilon", r.epsilon},
                     {"abs_floor", s.abs_floor},
                     {"checked", r.checked},
                     {"nonzero_analytic", r.nonzero_analytic},
                     {"max_rel_error", r.max_rel_error},
                     {"max_abs_error", r.max_abs_error},
                     {"worst_param", r.worst_param},
                     {"worst_index", r.worst_index},
                     {"tolerance", a.tolerance},
                     {"passed", ok}};
    write_text(a.json, doc.dump(2) + "\n");
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blockmdm: block masked-diffusion talker toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenDataArgs gen;
  TrainArgs tr;
  DistillArgs ds;
  DecodeArgs dec;
  BenchArgs be;
  MaskStatsArgs ms;
  GradCheckArgs gc;

  struct Entry {
    const char* name;
    const char* help;
    std::function<void(CLI::App&)> setup;
    std::function<int()> run;
  };
  const std::vector<Entry> entries{
      {"gen-data", "generate a synthetic corpus", [&](CLI::App& s) { setup_gen_data(s, gen); },
       [&] { return run_gen_data(gen); }},
      {"train", "masked-diffusion training", [&](CLI::App& s) { setup_train(s, tr); },
       [&] { return run_train(tr); }},
      {"distill", "iterative self-distillation", [&](CLI::App& s) { setup_distill(s, ds); },
       [&] { return run_distill(ds); }},
      {"decode", "block diffusion decoding", [&](CLI::App& s) { setup_decode(s, dec); },
       [&] { return run_decode(dec); }},
      {"bench", "step-sweep benchmark", [&](CLI::App& s) { setup_bench(s, be); },
       [&] { return run_bench(be); }},
      {"maskstats", "masking statistics", [&](CLI::App& s) { setup_maskstats(s, ms); },
       [&] { return run_maskstats(ms); }},
      {"gradcheck", "finite-difference gradient check of the talker",
       [&](CLI::App& s) { setup_gradcheck(s, gc); }, [&] { return run_gradcheck(gc); }},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", "JSON config; flags override its values");
    // Vector options keep appending across config and command line.
    e.setup(*sub);
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_expected_max() > 1) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    }
    subs.push_back(sub);
  }

  // Splice config values in front of the subcommand's own flags.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      const auto it = std::find_if(entries.begin(), entries.end(),
                                   [&](const Entry& e) { return args[0] == e.name; });
      if (it != entries.end()) {
        const std::vector<std::string> rest(args.begin() + 1, args.end());
        if (const auto cfg = find_config(rest)) {
          auto from_cfg = config_args(*cfg, it->name);
          args.insert(args.begin() + 1, from_cfg.begin(), from_cfg.end());
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      return entries[i].run();
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n" << subs[i]->help();
      return kExitUsage;
    } catch (const ParameterError& e) {
      std::cerr << "parameter error: " << e.what() << "\n";
      return kExitRuntime;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}
