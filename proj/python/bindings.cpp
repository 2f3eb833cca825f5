// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "blockmdm/bench.hpp"
#include "blockmdm/blockdecode.hpp"
#include "blockmdm/diffusion_train.hpp"
#include "blockmdm/masking.hpp"
#include "blockmdm/synthtask.hpp"
#include "blockmdm/talker.hpp"

namespace py = pybind11;
using namespace blockmdm;

namespace {

synth::TaskSpec make_spec(std::size_t source_vocab, int data_vocab, std::size_t upsample,
                          std::uint64_t grammar_seed, double noise) {
  synth::TaskSpec s;
  s.source_vocab = source_vocab;
  s.vocab.data_size = data_vocab;
  s.upsample = upsample;
  s.grammar_seed = grammar_seed;
  s.noise = noise;
  return s;
}

std::vector<synth::SamplePair> to_pairs(const std::vector<std::pair<TokenSequence, TokenSequence>>& v) {
  std::vector<synth::SamplePair> out;
  out.reserve(v.size());
  for (const auto& [s, t] : v) out.push_back({s, t});
  return out;
}

std::vector<std::pair<TokenSequence, TokenSequence>> from_pairs(
    const std::vector<synth::SamplePair>& v) {
  std::vector<std::pair<TokenSequence, TokenSequence>> out;
  out.reserve(v.size());
  for (const auto& p : v) out.emplace_back(p.source, p.target);
  return out;
}

masking::MaskingConfig make_masking(const std::string& mode, std::pair<double, double> global,
                                    std::pair<double, double> block,
                                    std::pair<double, double> token) {
  masking::MaskingConfig m;
  m.mode = masking::masking_mode_from_string(mode);
  m.global = {global.first, global.second};
  m.block = {block.first, block.second};
  m.token = {token.first, token.second};
  return m;
}

}  // namespace

PYBIND11_MODULE(_blockmdm, m) {
  m.doc() = "Block masked-diffusion talker toolkit";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  m.def("schedule_step", &train::schedule_step, py::arg("remaining"), py::arg("step"),
        py::arg("steps"));

  m.def(
      "gen_dataset",
      [](std::size_t count, std::size_t n_min, std::size_t n_max, std::uint64_t seed,
         std::size_t source_vocab, int data_vocab, std::size_t upsample,
         std::uint64_t grammar_seed, double noise) {
        nd::Rng rng(seed);
        return from_pairs(synth::gen_dataset(
            make_spec(source_vocab, data_vocab, upsample, grammar_seed, noise), count, n_min,
            n_max, rng));
      },
      py::arg("count"), py::arg("n_min") = 4, py::arg("n_max") = 12, py::arg("seed") = 0,
      py::arg("source_vocab") = 16, py::arg("data_vocab") = 64, py::arg("upsample") = 4,
      py::arg("grammar_seed") = 0, py::arg("noise") = 0.0,
      "List of (source, target) pairs; targets end with EOS = data_vocab + 1.");

  m.def(
      "token_error_rate",
      [](const TokenSequence& hyp, const TokenSequence& ref) {
        const auto r = synth::token_error_rate(hyp, ref);
        py::dict d;
        d["rate"] = r.rate;
        d["edits"] = r.edits;
        d["ref_length"] = r.ref_length;
        d["empty_reference"] = r.empty_reference;
        return d;
      },
      py::arg("hyp"), py::arg("ref"));

  m.def(
      "write_corpus",
      [](const std::filesystem::path& path,
         const std::vector<std::pair<TokenSequence, TokenSequence>>& samples,
         std::size_t source_vocab, int data_vocab, std::size_t upsample,
         std::uint64_t grammar_seed, double noise) {
        synth::Corpus c;
        c.spec = make_spec(source_vocab, data_vocab, upsample, grammar_seed, noise);
        c.samples = to_pairs(samples);
        synth::write_corpus(c, path);
      },
      py::arg("path"), py::arg("samples"), py::arg("source_vocab") = 16,
      py::arg("data_vocab") = 64, py::arg("upsample") = 4, py::arg("grammar_seed") = 0,
      py::arg("noise") = 0.0);

  m.def(
      "read_corpus",
      [](const std::filesystem::path& path) { return from_pairs(synth::read_corpus(path).samples); },
      py::arg("path"));

  m.def(
      "mask_stats",
      [](const std::string& mode, std::size_t length, std::size_t block_size,
         std::size_t samples, std::uint64_t seed, std::pair<double, double> global,
         std::pair<double, double> block, std::pair<double, double> token, double delta) {
        nd::Rng rng(seed);
        const auto r = masking::mask_stats(masking::partition(length, block_size),
                                           make_masking(mode, global, block, token), rng, samples,
                                           delta);
        py::dict d;
        d["mean_fraction"] = r.mean_fraction;
        d["analytic_fraction"] = r.analytic_fraction;
        d["ratio_histogram"] = r.ratio_histogram;
        d["full_blocks_checked"] = r.full_blocks_checked;
        d["quantization_violations"] = r.quantization_violations;
        d["hoeffding_tail_frequency"] = r.hoeffding_tail_frequency;
        d["hoeffding_bound"] = r.hoeffding_bound;
        return d;
      },
      py::arg("mode") = "hierarchical", py::arg("length") = 256, py::arg("block_size") = 16,
      py::arg("samples") = 10000, py::arg("seed") = 0,
      py::arg("global_range") = std::pair{0.3, 0.8}, py::arg("block_range") = std::pair{0.5, 1.0},
      py::arg("token_range") = std::pair{0.3, 1.0}, py::arg("delta") = 0.2);

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        train::GradCheckSetup s;
        s.seed = seed;
        const auto r = train::gradcheck_talker(s);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["max_abs_error"] = r.max_abs_error;
        d["checked"] = r.checked;
        d["worst_param"] = r.worst_param;
        return d;
      },
      py::arg("seed") = 0);

  py::class_<talker::Talker>(m, "Talker")
      .def(py::init([](std::size_t layers, std::size_t heads, std::size_t width, int data_vocab,
                       std::size_t source_vocab, std::size_t block_size, std::size_t anchors,
                       std::size_t max_len, std::uint64_t seed) {
             talker::TalkerConfig c;
             c.layers = layers;
             c.heads = heads;
             c.width = width;
             c.ff_width = 4 * width;
             c.fusion_width = 4 * width;
             c.vocab.data_size = data_vocab;
             c.source_vocab = source_vocab;
             c.block_size = block_size;
             c.anchors_per_block = anchors;
             c.max_len = max_len;
             talker::Talker t(c);
             nd::Rng rng(seed);
             t.init(rng);
             return t;
           }),
           py::arg("layers") = 4, py::arg("heads") = 4, py::arg("width") = 64,
           py::arg("data_vocab") = 64, py::arg("source_vocab") = 16, py::arg("block_size") = 16,
           py::arg("anchors") = 4, py::arg("max_len") = 256, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return talker::load_checkpoint(p); })
      .def("save", [](const talker::Talker& t, const std::filesystem::path& p) {
        talker::save_checkpoint(t, p);
      })
      .def_property_readonly("parameter_count", &talker::Talker::parameter_count)
      .def_property_readonly("checksum", &talker::Talker::checksum)
      .def_property_readonly("block_size", [](const talker::Talker& t) { return t.config().block_size; })
      .def_property_readonly("vocab_size", &talker::Talker::vocab_size)
      .def(
          "logits",
          [](const talker::Talker& t, const TokenSequence& tokens, const TokenSequence& source) {
            const auto cond = t.condition(source, tokens.size());
            const nd::Matrix z = t.forward(tokens, cond);
            py::array_t<double> out({z.rows(), z.cols()});
            auto view = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < z.rows(); ++i) {
              for (std::size_t j = 0; j < z.cols(); ++j) view(i, j) = z(i, j);
            }
            return out;
          },
          py::arg("tokens"), py::arg("source"))
      .def(
          "decode",
          [](const talker::Talker& t, const TokenSequence& source, std::size_t steps,
             std::size_t max_blocks) {
            decode::DecodeConfig cfg;
            cfg.block_size = t.config().block_size;
            cfg.eos = t.config().vocab.eos();
            cfg.steps = steps;
            cfg.max_blocks = max_blocks;
            const auto res = decode::decode_talker(t, source, cfg);
            py::dict d;
            d["tokens"] = res.tokens;
            d["ended_with_eos"] = res.ended_with_eos;
            d["forward_passes"] = res.trace.forward_passes;
            d["blocks"] = res.trace.blocks.size();
            return d;
          },
          py::arg("source"), py::arg("steps") = 4, py::arg("max_blocks") = 16)
      .def(
          "train",
          [](talker::Talker& t, const std::vector<std::pair<TokenSequence, TokenSequence>>& data,
             std::size_t steps, std::size_t batch_size, double lr, const std::string& masking,
             std::uint64_t seed) {
            train::TrainConfig cfg;
            cfg.steps = steps;
            cfg.batch_size = batch_size;
            cfg.optimizer.adamw.lr = lr;
            cfg.optimizer.warmup_steps = steps / 20;
            cfg.masking.mode = masking::masking_mode_from_string(masking);
            cfg.seed = seed;
            const auto pairs = to_pairs(data);
            std::vector<double> losses;
            {
              py::gil_scoped_release release;
              for (const auto& r : train::train_mdm(t, pairs, cfg).curve) losses.push_back(r.loss);
            }
            return losses;
          },
          py::arg("data"), py::arg("steps") = 100, py::arg("batch_size") = 16,
          py::arg("lr") = 1e-3, py::arg("masking") = "global", py::arg("seed") = 0)
      .def(
          "evaluate",
          [](const talker::Talker& t,
             const std::vector<std::pair<TokenSequence, TokenSequence>>& data, std::size_t steps,
             std::size_t max_blocks) {
            const auto pairs = to_pairs(data);
            const auto mt = bench::evaluate(t, pairs, steps, max_blocks);
            py::dict d;
            d["error_rate"] = mt.error_rate;
            d["tokens"] = mt.tokens;
            d["forward_passes"] = mt.forward_passes;
            d["tps"] = mt.tps;
            std::vector<double> conf, ent;
            for (const auto& s : mt.per_step) {
              conf.push_back(s.mean_confidence);
              ent.push_back(s.mean_entropy);
            }
            d["mean_confidence"] = conf;
            d["mean_entropy"] = ent;
            return d;
          },
          py::arg("data"), py::arg("steps") = 4, py::arg("max_blocks") = 16);
}
