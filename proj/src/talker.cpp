// SPDX-FileCopyrightText: © 2026 The blockmdm Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "blockmdm/talker.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "blockmdm/errors.hpp"

namespace blockmdm::talker {

namespace {

LayerParams make_layer(std::size_t index, const TalkerConfig& c) {
  const std::string p = "layer" + std::to_string(index) + ".";
  const std::size_t d = c.width;
  return LayerParams{
      nd::Param(p + "ln1.gamma", 1, d, false), nd::Param(p + "ln1.beta", 1, d, false),
      nd::Param(p + "wq", d, d),               nd::Param(p + "bq", 1, d, false),
      nd::Param(p + "wk", d, d),               nd::Param(p + "bk", 1, d, false),
      nd::Param(p + "wv", d, d),               nd::Param(p + "bv", 1, d, false),
      nd::Param(p + "wo", d, d),               nd::Param(p + "bo", 1, d, false),
      nd::Param(p + "ln2.gamma", 1, d, false), nd::Param(p + "ln2.beta", 1, d, false),
      nd::Param(p + "ff1.w", d, c.ff_width),   nd::Param(p + "ff1.b", 1, c.ff_width, false),
      nd::Param(p + "ff2.w", c.ff_width, d),   nd::Param(p + "ff2.b", 1, d, false),
  };
}

void fill_normal(nd::Matrix& m, nd::Rng& rng, double stddev) {
  for (double& x : m.flat()) x = rng.normal(0.0, stddev);
}

void add_rows_into(nd::Matrix& dst, std::size_t dst_row, std::span<const double> src) {
  auto d = dst.row(dst_row);
  for (std::size_t c = 0; c < src.size(); ++c) d[c] += src[c];
}

}  // namespace

void TalkerConfig::validate() const {
  vocab.validate();
  if (layers == 0 || heads == 0 || width == 0 || ff_width == 0 || fusion_width == 0 ||
      block_size == 0 || max_len == 0 || source_vocab == 0) {
    throw ParameterError("TalkerConfig: sizes must be positive");
  }
  if (width % heads != 0) {
    throw ParameterError("TalkerConfig: width " + std::to_string(width) +
                         " not divisible by heads " + std::to_string(heads));
  }
  if (anchors_per_block < 1 || anchors_per_block > block_size) {
    throw ParameterError("TalkerConfig: anchors_per_block " + std::to_string(anchors_per_block) +
                         " must lie in [1, block_size=" + std::to_string(block_size) + "]");
  }
}

bool operator==(const TalkerConfig& a, const TalkerConfig& b) {
  return a.layers == b.layers && a.heads == b.heads && a.width == b.width &&
         a.ff_width == b.ff_width && a.fusion_width == b.fusion_width &&
         a.vocab.data_size == b.vocab.data_size && a.block_size == b.block_size &&
         a.anchors_per_block == b.anchors_per_block && a.max_len == b.max_len &&
         a.source_vocab == b.source_vocab;
}

nd::Visibility build_block_causal_mask(std::size_t length, std::size_t block_size) {
  if (block_size == 0) throw ParameterError("build_block_causal_mask: block size must be >= 1");
  nd::Visibility mask(length, length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t limit = std::min(length, (i / block_size + 1) * block_size);
    for (std::size_t j = 0; j < limit; ++j) mask.set(i, j, true);
  }
  return mask;
}

Talker::Talker(TalkerConfig cfg)
    : cfg_(cfg),
      tok_emb_("tok_emb", cfg.vocab.size(), cfg.width, false),
      pos_emb_("pos_emb", cfg.max_len, cfg.width, false),
      src_emb_("src_emb", cfg.source_vocab, cfg.width, false),
      fusion_(cfg.width, cfg.fusion_width),
      final_gamma_("final_ln.gamma", 1, cfg.width, false),
      final_beta_("final_ln.beta", 1, cfg.width, false),
      head_w_("head.w", cfg.width, cfg.vocab.size()),
      head_b_("head.b", 1, cfg.vocab.size(), false) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg_.layers; ++l) layers_.push_back(make_layer(l, cfg_));
  for (auto& layer : layers_) {
    layer.ln1_gamma.value.fill(1.0);
    layer.ln2_gamma.value.fill(1.0);
  }
  final_gamma_.value.fill(1.0);
  collect();
}

Talker::Talker(const Talker& other)
    : cfg_(other.cfg_),
      tok_emb_(other.tok_emb_),
      pos_emb_(other.pos_emb_),
      src_emb_(other.src_emb_),
      fusion_(other.fusion_),
      layers_(other.layers_),
      final_gamma_(other.final_gamma_),
      final_beta_(other.final_beta_),
      head_w_(other.head_w_),
      head_b_(other.head_b_) {
  collect();
}

Talker& Talker::operator=(const Talker& other) {
  if (this != &other) {
    Talker copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Talker::Talker(Talker&& other) noexcept
    : cfg_(other.cfg_),
      tok_emb_(std::move(other.tok_emb_)),
      pos_emb_(std::move(other.pos_emb_)),
      src_emb_(std::move(other.src_emb_)),
      fusion_(std::move(other.fusion_)),
      layers_(std::move(other.layers_)),
      final_gamma_(std::move(other.final_gamma_)),
      final_beta_(std::move(other.final_beta_)),
      head_w_(std::move(other.head_w_)),
      head_b_(std::move(other.head_b_)) {
  collect();
  other.order_.clear();
}

Talker& Talker::operator=(Talker&& other) noexcept {
  if (this != &other) {
    cfg_ = other.cfg_;
    tok_emb_ = std::move(other.tok_emb_);
    pos_emb_ = std::move(other.pos_emb_);
    src_emb_ = std::move(other.src_emb_);
    fusion_ = std::move(other.fusion_);
    layers_ = std::move(other.layers_);
    final_gamma_ = std::move(other.final_gamma_);
    final_beta_ = std::move(other.final_beta_);
    head_w_ = std::move(other.head_w_);
    head_b_ = std::move(other.head_b_);
    collect();
    other.order_.clear();
  }
  return *this;
}

void Talker::collect() {
  order_.clear();
  order_ = {&tok_emb_, &pos_emb_, &src_emb_, &fusion_.w1, &fusion_.b1, &fusion_.w2, &fusion_.b2};
  for (auto& l : layers_) {
    for (nd::Param* p : {&l.ln1_gamma, &l.ln1_beta, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv,
                         &l.wo, &l.bo, &l.ln2_gamma, &l.ln2_beta, &l.ff1_w, &l.ff1_b, &l.ff2_w,
                         &l.ff2_b}) {
      order_.push_back(p);
    }
  }
  for (nd::Param* p : {&final_gamma_, &final_beta_, &head_w_, &head_b_}) order_.push_back(p);
}

void Talker::init(nd::Rng& rng, bool zero_head) {
  const double emb_std = 0.1;
  fill_normal(tok_emb_.value, rng, emb_std);
  fill_normal(pos_emb_.value, rng, emb_std);
  fill_normal(src_emb_.value, rng, emb_std);
  const auto lecun = [](const nd::Param& p) {
    return 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
  };
  fill_normal(fusion_.w1.value, rng, lecun(fusion_.w1));
  fill_normal(fusion_.w2.value, rng, lecun(fusion_.w2));
  fusion_.b1.value.set_zero();
  fusion_.b2.value.set_zero();
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.layers));
  for (auto& l : layers_) {
    fill_normal(l.wq.value, rng, lecun(l.wq));
    fill_normal(l.wk.value, rng, lecun(l.wk));
    fill_normal(l.wv.value, rng, lecun(l.wv));
    fill_normal(l.wo.value, rng, lecun(l.wo) * residual_scale);
    fill_normal(l.ff1_w.value, rng, lecun(l.ff1_w));
    fill_normal(l.ff2_w.value, rng, lecun(l.ff2_w) * residual_scale);
    for (nd::Param* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ff1_b, &l.ff2_b, &l.ln1_beta, &l.ln2_beta}) {
      b->value.set_zero();
    }
    l.ln1_gamma.value.fill(1.0);
    l.ln2_gamma.value.fill(1.0);
  }
  final_gamma_.value.fill(1.0);
  final_beta_.value.set_zero();
  head_b_.value.set_zero();
  if (zero_head) {
    head_w_.value.set_zero();
  } else {
    fill_normal(head_w_.value, rng, lecun(head_w_));
  }
  for (nd::Param* p : order_) {
    p->moment1.set_zero();
    p->moment2.set_zero();
    p->zero_grad();
  }
}

std::vector<nd::Param*> Talker::params() { return order_; }

std::vector<const nd::Param*> Talker::params() const {
  return {order_.begin(), order_.end()};
}

std::size_t Talker::parameter_count() const {
  std::size_t n = 0;
  for (const nd::Param* p : order_) n += p->value.size();
  return n;
}

void Talker::zero_grad() {
  for (nd::Param* p : order_) p->zero_grad();
}

semantics::SemanticStates Talker::semantic_states(std::span<const Token> source) const {
  semantics::SemanticStates states{nd::Matrix(source.size(), cfg_.width)};
  for (std::size_t m = 0; m < source.size(); ++m) {
    const Token s = source[m];
    if (s < 0 || static_cast<std::size_t>(s) >= cfg_.source_vocab) {
      throw InputError("source token " + std::to_string(s) + " at index " + std::to_string(m) +
                       " outside source vocabulary of " + std::to_string(cfg_.source_vocab));
    }
    const auto row = src_emb_.value.row(static_cast<std::size_t>(s));
    std::copy(row.begin(), row.end(), states.h.row(m).begin());
  }
  return states;
}

Conditioning Talker::condition(std::span<const Token> source, std::size_t length) const {
  const auto part = masking::partition(length, cfg_.block_size);
  const auto anchors = semantics::build_anchors(part, cfg_.anchors_per_block);
  Conditioning cond;
  cond.source.assign(source.begin(), source.end());
  cond.aligned = semantics::align(semantic_states(source), anchors, length);
  return cond;
}

nd::Matrix Talker::forward(std::span<const Token> tokens, const Conditioning& cond,
                           ForwardCache* cache) const {
  const std::size_t t_len = tokens.size();
  const std::size_t d = cfg_.width;
  if (t_len == 0) throw InputError("Talker::forward: empty token sequence");
  if (t_len > cfg_.max_len) {
    throw InputError("Talker::forward: length " + std::to_string(t_len) + " exceeds max_len " +
                     std::to_string(cfg_.max_len));
  }
  if (cond.aligned.length() < t_len || cond.aligned.width() != d) {
    throw DimensionError("Talker::forward: conditioning " + cond.aligned.h_prime.shape_string() +
                         " for " + std::to_string(t_len) + " tokens of width " +
                         std::to_string(d));
  }
  nd::Matrix emb(t_len, d);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!cfg_.vocab.in_range(tokens[t])) {
      throw InputError("Talker::forward: token id " + std::to_string(tokens[t]) +
                       " at position " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(cfg_.vocab.size()));
    }
    const auto row = tok_emb_.value.row(static_cast<std::size_t>(tokens[t]));
    std::copy(row.begin(), row.end(), emb.row(t).begin());
  }

  semantics::FusionCache fusion_cache;
  nd::Matrix x = semantics::fuse(emb, cond.aligned.h_prime, fusion_,
                                 cache != nullptr ? &fusion_cache : nullptr);
  for (std::size_t t = 0; t < t_len; ++t) add_rows_into(x, t, pos_emb_.value.row(t));

  nd::Visibility mask = build_block_causal_mask(t_len, cfg_.block_size);
  const std::size_t dh = d / cfg_.heads;
  if (cache != nullptr) cache->layers.assign(cfg_.layers, LayerCache{});

  for (std::size_t li = 0; li < cfg_.layers; ++li) {
    const LayerParams& l = layers_[li];
    LayerCache* lc = cache != nullptr ? &cache->layers[li] : nullptr;

    nd::LayerNormCache ln1;
    nd::Matrix n1 = nd::layer_norm(x, l.ln1_gamma.value, l.ln1_beta.value, lc ? &ln1 : nullptr);
    nd::Matrix q = nd::linear(n1, l.wq.value, l.bq.value);
    nd::Matrix k = nd::linear(n1, l.wk.value, l.bk.value);
    nd::Matrix v = nd::linear(n1, l.wv.value, l.bv.value);
    nd::Matrix heads_out(t_len, d);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      nd::Matrix qh = nd::column_slice(q, h * dh, dh);
      nd::Matrix kh = nd::column_slice(k, h * dh, dh);
      nd::Matrix vh = nd::column_slice(v, h * dh, dh);
      nd::AttentionCache ac;
      nd::Matrix oh = nd::masked_attention(qh, kh, vh, mask, lc ? &ac : nullptr);
      nd::add_column_slice(heads_out, h * dh, oh);
      if (lc != nullptr) {
        lc->q.push_back(std::move(qh));
        lc->k.push_back(std::move(kh));
        lc->v.push_back(std::move(vh));
        lc->attention.push_back(std::move(ac));
      }
    }
    nd::Matrix mid = nd::linear(heads_out, l.wo.value, l.bo.value);
    mid += x;

    nd::LayerNormCache ln2;
    nd::Matrix n2 = nd::layer_norm(mid, l.ln2_gamma.value, l.ln2_beta.value, lc ? &ln2 : nullptr);
    nd::Matrix ff_pre = nd::linear(n2, l.ff1_w.value, l.ff1_b.value);
    nd::Matrix ff_act = nd::gelu(ff_pre);
    nd::Matrix out = nd::linear(ff_act, l.ff2_w.value, l.ff2_b.value);
    out += mid;

    if (lc != nullptr) {
      lc->input = std::move(x);
      lc->ln1 = std::move(ln1);
      lc->norm1 = std::move(n1);
      lc->heads_out = std::move(heads_out);
      lc->mid = std::move(mid);
      lc->ln2 = std::move(ln2);
      lc->norm2 = std::move(n2);
      lc->ff_pre = std::move(ff_pre);
      lc->ff_act = std::move(ff_act);
    }
    x = std::move(out);
  }

  nd::LayerNormCache final_ln;
  nd::Matrix nf = nd::layer_norm(x, final_gamma_.value, final_beta_.value,
                                 cache != nullptr ? &final_ln : nullptr);
  nd::Matrix logits = nd::linear(nf, head_w_.value, head_b_.value);

  if (cache != nullptr) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->source = cond.source;
    cache->anchors = cond.aligned.anchors;
    cache->source_row = cond.aligned.source_row;
    cache->mask = std::move(mask);
    cache->fusion = std::move(fusion_cache);
    cache->final_ln = std::move(final_ln);
    cache->final_norm = std::move(nf);
  }
  return logits;
}

void Talker::backward(const ForwardCache& cache, const nd::Matrix& dlogits) {
  const std::size_t t_len = cache.tokens.size();
  const std::size_t d = cfg_.width;
  const std::size_t dh = d / cfg_.heads;
  if (dlogits.rows() != t_len || dlogits.cols() != vocab_size()) {
    throw DimensionError("Talker::backward: dlogits " + dlogits.shape_string() + " for T=" +
                         std::to_string(t_len));
  }
  nd::Matrix dnf = nd::linear_backward(cache.final_norm, head_w_.value, dlogits, head_w_.grad,
                                       head_b_.grad);
  nd::Matrix dx = nd::layer_norm_backward(cache.final_ln, final_gamma_.value, dnf,
                                          final_gamma_.grad, final_beta_.grad);

  for (std::size_t li = cfg_.layers; li-- > 0;) {
    LayerParams& l = layers_[li];
    const LayerCache& lc = cache.layers[li];

    // out = mid + ff2(gelu(ff1(ln2(mid))))
    nd::Matrix dact = nd::linear_backward(lc.ff_act, l.ff2_w.value, dx, l.ff2_w.grad, l.ff2_b.grad);
    nd::Matrix dpre = nd::gelu_backward(lc.ff_pre, dact);
    nd::Matrix dn2 = nd::linear_backward(lc.norm2, l.ff1_w.value, dpre, l.ff1_w.grad, l.ff1_b.grad);
    nd::Matrix dmid = nd::layer_norm_backward(lc.ln2, l.ln2_gamma.value, dn2, l.ln2_gamma.grad,
                                              l.ln2_beta.grad);
    dmid += dx;

    // mid = x + wo(heads(ln1(x)))
    nd::Matrix dheads =
        nd::linear_backward(lc.heads_out, l.wo.value, dmid, l.wo.grad, l.bo.grad);
    nd::Matrix dq(t_len, d), dk(t_len, d), dv(t_len, d);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      nd::Matrix doh = nd::column_slice(dheads, h * dh, dh);
      auto g = nd::masked_attention_backward(lc.q[h], lc.k[h], lc.v[h], lc.attention[h], doh);
      nd::add_column_slice(dq, h * dh, g.dq);
      nd::add_column_slice(dk, h * dh, g.dk);
      nd::add_column_slice(dv, h * dh, g.dv);
    }
    nd::Matrix dn1 = nd::linear_backward(lc.norm1, l.wq.value, dq, l.wq.grad, l.bq.grad);
    dn1 += nd::linear_backward(lc.norm1, l.wk.value, dk, l.wk.grad, l.bk.grad);
    dn1 += nd::linear_backward(lc.norm1, l.wv.value, dv, l.wv.grad, l.bv.grad);
    nd::Matrix dx_in = nd::layer_norm_backward(lc.ln1, l.ln1_gamma.value, dn1, l.ln1_gamma.grad,
                                               l.ln1_beta.grad);
    dx_in += dmid;
    dx = std::move(dx_in);
  }

  for (std::size_t t = 0; t < t_len; ++t) add_rows_into(pos_emb_.grad, t, dx.row(t));
  nd::Matrix dinput = semantics::fuse_backward(cache.fusion, fusion_, dx);
  for (std::size_t t = 0; t < t_len; ++t) {
    add_rows_into(tok_emb_.grad, static_cast<std::size_t>(cache.tokens[t]), dinput.row(t));
  }
  // d h'[a_m] flows to the source embedding row of source[m].
  for (std::size_t m = 0; m < cache.anchors.size(); ++m) {
    if (!cache.source_row[m] || cache.anchors[m] >= t_len) continue;
    const std::size_t src_index = *cache.source_row[m];
    const auto s = static_cast<std::size_t>(cache.source[src_index]);
    add_rows_into(src_emb_.grad, s, dinput.row(cache.anchors[m]));
  }
}

std::uint64_t Talker::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const nd::Param* p : order_) {
    for (double x : p->value.flat()) {
      auto bits = std::bit_cast<std::uint64_t>(x);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic = {'B', 'M', 'D', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(b.data(), 8);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw LoadError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw LoadError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::uint32_t narrow(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

void save_checkpoint(const Talker& model, std::ostream& out) {
  const TalkerConfig& c = model.config();
  const auto params = model.params();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  for (std::size_t v : {c.layers, c.heads, c.width, c.ff_width, c.fusion_width,
                        static_cast<std::size_t>(c.vocab.data_size), c.vocab.size(),
                        static_cast<std::size_t>(c.vocab.mask()),
                        static_cast<std::size_t>(c.vocab.eos()),
                        static_cast<std::size_t>(c.vocab.pad()), c.block_size, c.anchors_per_block,
                        c.max_len, c.source_vocab, params.size()}) {
    put_u32(out, narrow(v));
  }
  for (const nd::Param* p : params) {
    put_u32(out, narrow(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, narrow(p->value.rows()));
    put_u32(out, narrow(p->value.cols()));
    for (double x : p->value.flat()) put_f64(out, x);
  }
  if (!out) throw LoadError("checkpoint: write failed");
}

void save_checkpoint(const Talker& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("checkpoint: cannot open '" + path.string() + "' for writing");
  save_checkpoint(model, out);
}

Talker load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw LoadError("checkpoint: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw LoadError("checkpoint: unsupported version " + std::to_string(version));
  }
  TalkerConfig c;
  c.layers = get_u32(in);
  c.heads = get_u32(in);
  c.width = get_u32(in);
  c.ff_width = get_u32(in);
  c.fusion_width = get_u32(in);
  c.vocab.data_size = static_cast<std::int32_t>(get_u32(in));
  const std::uint32_t vocab_size = get_u32(in);
  const std::uint32_t mask_id = get_u32(in);
  const std::uint32_t eos_id = get_u32(in);
  const std::uint32_t pad_id = get_u32(in);
  c.block_size = get_u32(in);
  c.anchors_per_block = get_u32(in);
  c.max_len = get_u32(in);
  c.source_vocab = get_u32(in);
  const std::uint32_t param_count = get_u32(in);
  if (vocab_size != c.vocab.size() || mask_id != static_cast<std::uint32_t>(c.vocab.mask()) ||
      eos_id != static_cast<std::uint32_t>(c.vocab.eos()) ||
      pad_id != static_cast<std::uint32_t>(c.vocab.pad())) {
    throw LoadError("checkpoint: special token layout does not match data_vocab " +
                    std::to_string(c.vocab.data_size));
  }
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw LoadError(std::string("checkpoint: invalid config: ") + e.what());
  }
  Talker model(c);
  auto params = model.params();
  if (param_count != params.size()) {
    throw LoadError("checkpoint: " + std::to_string(param_count) + " parameters, expected " +
                    std::to_string(params.size()));
  }
  for (nd::Param* p : params) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len > 4096) throw LoadError("checkpoint: corrupt parameter name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw LoadError("checkpoint: truncated file");
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw LoadError("checkpoint: parameter '" + name + "' " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " where '" + p->name + "' " +
                      p->value.shape_string() + " was expected");
    }
    for (double& x : p->value.flat()) x = get_f64(in);
  }
  return model;
}

Talker load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("checkpoint: cannot open '" + path.string() + "'");
  return load_checkpoint(in);
}

void require_compatible(const TalkerConfig& expected, const TalkerConfig& actual,
                        const std::string& context) {
  std::string diff;
  const auto cmp = [&](const char* field, std::size_t e, std::size_t a) {
    if (e != a) {
      diff += std::string(diff.empty() ? "" : ", ") + field + " expected " + std::to_string(e) +
              " got " + std::to_string(a);
    }
  };
  cmp("V", expected.vocab.size(), actual.vocab.size());
  cmp("d", expected.width, actual.width);
  cmp("B", expected.block_size, actual.block_size);
  cmp("Q", expected.anchors_per_block, actual.anchors_per_block);
  cmp("layers", expected.layers, actual.layers);
  cmp("heads", expected.heads, actual.heads);
  cmp("source_vocab", expected.source_vocab, actual.source_vocab);
  cmp("max_len", expected.max_len, actual.max_len);
  if (!diff.empty()) throw LoadError(context + ": config mismatch: " + diff);
}

}  // namespace blockmdm::talker
