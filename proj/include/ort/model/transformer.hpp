#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ort/geometry.hpp"
#include "ort/model/attention.hpp"
#include "ort/model/config.hpp"
#include "ort/numerics/ops.hpp"

namespace ort {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

template <class T>
struct AttentionParams {
  Tensor<T> w_q, w_k, w_v, w_o;               // [d_model x d_model], heads packed by column
  std::vector<GeometricParams<T>> w_g;        // one per head, geometric encoder only
};

template <class T>
struct NormParams {
  Tensor<T> gamma, beta;
};

template <class T>
struct FfnParams {
  Tensor<T> w1, b1, w2, b2;
};

template <class T>
struct EncoderLayerParams {
  AttentionParams<T> attn;
  NormParams<T> ln1;
  FfnParams<T> ffn;
  NormParams<T> ln2;
};

template <class T>
struct DecoderLayerParams {
  AttentionParams<T> self_attn;
  NormParams<T> ln1;
  AttentionParams<T> cross_attn;
  NormParams<T> ln2;
  FfnParams<T> ffn;
  NormParams<T> ln3;
};

/// Every learned tensor of the captioner. Handles returned by named() share
/// storage with the members, so optimizers and checkpoint loaders write
/// through them.
template <class T>
struct ModelParams {
  Tensor<T> w_in, b_in;
  std::vector<EncoderLayerParams<T>> encoder;
  std::vector<DecoderLayerParams<T>> decoder;
  Tensor<T> token_embed;
  Tensor<T> w_out, b_out;

  [[nodiscard]] std::vector<std::pair<std::string, Tensor<T>>> named() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto attn = [&](const std::string& p, const AttentionParams<T>& a) {
      out.emplace_back(p + ".W_Q", a.w_q);
      out.emplace_back(p + ".W_K", a.w_k);
      out.emplace_back(p + ".W_V", a.w_v);
      out.emplace_back(p + ".W_O", a.w_o);
      for (std::size_t h = 0; h < a.w_g.size(); ++h) {
        out.emplace_back(p + ".W_G." + std::to_string(h), a.w_g[h].w_g);
      }
    };
    auto norm = [&](const std::string& p, const NormParams<T>& n) {
      out.emplace_back(p + ".gamma", n.gamma);
      out.emplace_back(p + ".beta", n.beta);
    };
    auto ffn = [&](const std::string& p, const FfnParams<T>& f) {
      out.emplace_back(p + ".W1", f.w1);
      out.emplace_back(p + ".b1", f.b1);
      out.emplace_back(p + ".W2", f.w2);
      out.emplace_back(p + ".b2", f.b2);
    };
    out.emplace_back("input.W", w_in);
    out.emplace_back("input.b", b_in);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string p = "enc." + std::to_string(l);
      attn(p + ".attn", encoder[l].attn);
      norm(p + ".ln1", encoder[l].ln1);
      ffn(p + ".ffn", encoder[l].ffn);
      norm(p + ".ln2", encoder[l].ln2);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      const std::string p = "dec." + std::to_string(l);
      attn(p + ".self", decoder[l].self_attn);
      norm(p + ".ln1", decoder[l].ln1);
      attn(p + ".cross", decoder[l].cross_attn);
      norm(p + ".ln2", decoder[l].ln2);
      ffn(p + ".ffn", decoder[l].ffn);
      norm(p + ".ln3", decoder[l].ln3);
    }
    out.emplace_back("token_embed", token_embed);
    out.emplace_back("output.W", w_out);
    out.emplace_back("output.b", b_out);
    return out;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t.size();
    return n;
  }
};

namespace detail {

template <class T>
Tensor<T> xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> w(fan_in * fan_out);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-a, a));
  return Tensor<T>({fan_in, fan_out}, std::move(w), true);
}

template <class T>
Tensor<T> zeros_param(std::size_t d) {
  return Tensor<T>::zeros({d}, true);
}

template <class T>
Tensor<T> ones_param(std::size_t d) {
  return Tensor<T>({d}, std::vector<T>(d, T(1)), true);
}

template <class T>
AttentionParams<T> init_attention(const ModelConfig& cfg, Rng& rng, bool geometric) {
  AttentionParams<T> a;
  a.w_q = xavier<T>(cfg.d_model, cfg.d_model, rng);
  a.w_k = xavier<T>(cfg.d_model, cfg.d_model, rng);
  a.w_v = xavier<T>(cfg.d_model, cfg.d_model, rng);
  a.w_o = xavier<T>(cfg.d_model, cfg.d_model, rng);
  if (geometric) {
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      a.w_g.push_back(init_geometric_params<T>(cfg.geometry, rng));
    }
  }
  return a;
}

template <class T>
FfnParams<T> init_ffn(const ModelConfig& cfg, Rng& rng) {
  return {xavier<T>(cfg.d_model, cfg.d_ff, rng), zeros_param<T>(cfg.d_ff),
          xavier<T>(cfg.d_ff, cfg.d_model, rng), zeros_param<T>(cfg.d_model)};
}

template <class T>
NormParams<T> init_norm(const ModelConfig& cfg) {
  return {ones_param<T>(cfg.d_model), zeros_param<T>(cfg.d_model)};
}

}  // namespace detail

/// Seeded initialization: Xavier-uniform projections, zero biases, unit
/// layer-norm gains, token embeddings with standard deviation 1/sqrt(d_model)
/// (the decoder rescales them by sqrt(d_model)).
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng(seed).split(0x1417);
  ModelParams<T> p;
  const bool geometric = cfg.mode.attention == AttentionMode::geometric;
  p.w_in = detail::xavier<T>(cfg.d_feature, cfg.d_model, rng);
  p.b_in = detail::zeros_param<T>(cfg.d_model);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    EncoderLayerParams<T> e;
    e.attn = detail::init_attention<T>(cfg, rng, geometric);
    e.ln1 = detail::init_norm<T>(cfg);
    e.ffn = detail::init_ffn<T>(cfg, rng);
    e.ln2 = detail::init_norm<T>(cfg);
    p.encoder.push_back(std::move(e));
  }
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    DecoderLayerParams<T> d;
    d.self_attn = detail::init_attention<T>(cfg, rng, false);
    d.ln1 = detail::init_norm<T>(cfg);
    d.cross_attn = detail::init_attention<T>(cfg, rng, false);
    d.ln2 = detail::init_norm<T>(cfg);
    d.ffn = detail::init_ffn<T>(cfg, rng);
    d.ln3 = detail::init_norm<T>(cfg);
    p.decoder.push_back(std::move(d));
  }
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  std::vector<T> emb(cfg.vocab_size * cfg.d_model);
  for (auto& v : emb) v = static_cast<T>(rng.normal() * emb_std);
  p.token_embed = Tensor<T>({cfg.vocab_size, cfg.d_model}, std::move(emb), true);
  p.w_out = detail::xavier<T>(cfg.d_model, cfg.vocab_size, rng);
  p.b_out = detail::zeros_param<T>(cfg.vocab_size);
  return p;
}

/// Independent copy: every tensor gets fresh storage, keeping its
/// requires_grad flag.
template <class T>
ModelParams<T> deep_copy(const ModelParams<T>& src) {
  ModelParams<T> out = src;
  auto fresh = [](Tensor<T>& t) { t = t.clone(t.requires_grad()); };
  auto attn = [&](AttentionParams<T>& a) {
    for (auto* t : {&a.w_q, &a.w_k, &a.w_v, &a.w_o}) fresh(*t);
    for (auto& g : a.w_g) fresh(g.w_g);
  };
  auto norm = [&](NormParams<T>& n) {
    fresh(n.gamma);
    fresh(n.beta);
  };
  auto ffn = [&](FfnParams<T>& f) {
    for (auto* t : {&f.w1, &f.b1, &f.w2, &f.b2}) fresh(*t);
  };
  fresh(out.w_in);
  fresh(out.b_in);
  for (auto& l : out.encoder) {
    attn(l.attn);
    norm(l.ln1);
    ffn(l.ffn);
    norm(l.ln2);
  }
  for (auto& l : out.decoder) {
    attn(l.self_attn);
    norm(l.ln1);
    attn(l.cross_attn);
    norm(l.ln2);
    ffn(l.ffn);
    norm(l.ln3);
  }
  fresh(out.token_embed);
  fresh(out.w_out);
  fresh(out.b_out);
  return out;
}

/// Copies parameters into another precision (e.g. float -> double for
/// gradient checks), preserving names and structure.
template <class U, class T>
ModelParams<U> cast_params(const ModelParams<T>& src, const ModelConfig& cfg) {
  ModelParams<U> dst = init_params<U>(cfg, 0);
  auto from = src.named();
  auto to = dst.named();
  if (from.size() != to.size()) throw UsageError("cast_params: parameter layout mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    auto out = to[i].second.mutable_data();
    auto in = from[i].second.data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<U>(in[k]);
  }
  return dst;
}

/// Sinusoidal position table [len x d] with base 10000 (sin on even
/// columns, cos on odd).
template <class T>
Tensor<T> positional_table(std::size_t len, std::size_t d) {
  std::vector<T> pe(len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[pos * d + i] = static_cast<T>(std::sin(static_cast<double>(pos) / freq));
      if (i + 1 < d) pe[pos * d + i + 1] = static_cast<T>(std::cos(static_cast<double>(pos) / freq));
    }
  }
  return Tensor<T>({len, d}, std::move(pe));
}

/// Per-call switches. Test hooks (gate_override, zero_position_table) exist
/// so reductions between encoder variants can be checked exactly.
template <class T>
struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;  // required when train && dropout_rate > 0
  AttentionStats* stats = nullptr;
  AttentionTrace<T>* trace = nullptr;
  std::optional<T> gate_override;  // every omega_G entry replaced by this constant
  bool zero_position_table = false;
};

template <class T>
struct EncodedImage {
  Tensor<T> tokens;                 // [N x d_model]
  std::vector<BoundingBox> boxes;   // in token order
};

/// The captioning transformer: object-token encoder with optional geometric
/// gating, standard decoder, vocabulary projection.
template <class T>
class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, ModelParams<T> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const ModelParams<T>& params() const { return params_; }
  [[nodiscard]] ModelParams<T>& params() { return params_; }

  /// dropout(relu(features W_in + b_in)).
  Tensor<T> input_embed(const Tensor<T>& features, ForwardOptions<T>& opt) const {
    if (features.rank() != 2 || features.cols() != cfg_.d_feature) {
      throw DimensionError("input_embed: features " + shape_str(features.shape()) + " but d_feature is " +
                           std::to_string(cfg_.d_feature));
    }
    return drop(relu(add_bias(matmul(features, params_.w_in), params_.b_in)), opt);
  }

  /// Multi-head attention of queries x_q over keys/values x_kv. When
  /// `gated`, each head's weights come from combined_attention with that
  /// head's gate matrix (built from `pair_emb` unless overridden).
  Tensor<T> multi_head(const Tensor<T>& x_q, const Tensor<T>& x_kv, const AttentionParams<T>& p, bool gated,
                       const Tensor<T>* pair_emb, RowMask mask, ForwardOptions<T>& opt, const char* block,
                       std::size_t layer) const {
    const std::size_t dk = cfg_.d_k();
    const Tensor<T> q = matmul(x_q, p.w_q);
    const Tensor<T> k = matmul(x_kv, p.w_k);
    const Tensor<T> v = matmul(x_kv, p.w_v);
    const bool geometric = gated;
    std::vector<Tensor<T>> heads;
    heads.reserve(cfg_.n_heads);
    for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
      const Tensor<T> qh = slice_cols(q, h * dk, dk);
      const Tensor<T> kh = slice_cols(k, h * dk, dk);
      const Tensor<T> vh = slice_cols(v, h * dk, dk);
      const Tensor<T> omega_a = appearance_attention(qh, kh);
      Tensor<T> weights;
      std::optional<Tensor<T>> gate;
      if (geometric) {
        const std::size_t n = x_q.rows();
        if (opt.gate_override) {
          gate = Tensor<T>::filled({n, n}, *opt.gate_override);
        } else {
          if (p.w_g.size() != cfg_.n_heads || pair_emb == nullptr) {
            throw UsageError("geometric attention needs boxes and per-head W_G parameters");
          }
          gate = geometry_matrix_from_embeddings(*pair_emb, n, p.w_g[h]);
        }
        weights = combined_attention(omega_a, *gate, opt.stats);
      } else {
        weights = softmax_rows(omega_a, mask);
      }
      if (opt.trace) {
        NoGradGuard ng;
        AttentionRecord<T> rec{block, layer, h, weights.detach(), softmax_rows(omega_a, mask).detach(),
                               std::nullopt};
        if (gate) rec.gate = gate->detach();
        opt.trace->records.push_back(std::move(rec));
      }
      if (cfg_.attention_dropout) weights = drop(weights, opt);
      heads.push_back(matmul(weights, vh));
    }
    return matmul(concat_cols(heads), p.w_o);
  }

  /// max(0, x W1 + b1) W2 + b2, row-wise.
  Tensor<T> ffn(const Tensor<T>& x, const FfnParams<T>& f) const {
    return add_bias(matmul(relu(add_bias(matmul(x, f.w1), f.b1)), f.w2), f.b2);
  }

  /// Embeds objects and runs the encoder stack. In ordered_positional mode
  /// the objects are re-sorted first and the output follows the sorted order.
  EncodedImage<T> encode(const Tensor<T>& features, std::vector<BoundingBox> boxes,
                         ForwardOptions<T>& opt) const {
    if (features.rank() != 2 || features.rows() != boxes.size()) {
      throw DimensionError("encode: " + std::to_string(boxes.size()) + " boxes for features " +
                           shape_str(features.shape()));
    }
    for (const auto& b : boxes) {
      if (!b.valid()) throw DimensionError("encode: invalid bounding box (w,h must be > 0 and finite)");
    }
    Tensor<T> feats = features;
    const bool ordered = cfg_.mode.attention == AttentionMode::ordered_positional;
    if (ordered) {
      const auto perm = order_boxes(boxes, cfg_.mode.order);
      feats = gather_rows(features, perm);
      std::vector<BoundingBox> sorted;
      sorted.reserve(boxes.size());
      for (auto i : perm) sorted.push_back(boxes[i]);
      boxes = std::move(sorted);
    }
    Tensor<T> x = input_embed(feats, opt);
    if (ordered) {
      Tensor<T> pe = opt.zero_position_table ? Tensor<T>::zeros({boxes.size(), cfg_.d_model})
                                             : positional_table<T>(boxes.size(), cfg_.d_model);
      x = add(x, pe);
    }
    const bool gated = cfg_.mode.attention == AttentionMode::geometric;
    std::optional<Tensor<T>> pair_emb;
    if (gated && !opt.gate_override) pair_emb = pair_embeddings<T>(boxes, cfg_.geometry);
    for (std::size_t l = 0; l < params_.encoder.size(); ++l) {
      const auto& layer = params_.encoder[l];
      const Tensor<T> a = multi_head(x, x, layer.attn, gated, pair_emb ? &*pair_emb : nullptr, RowMask::none,
                                     opt, "encoder", l);
      x = layer_norm(add(x, drop(a, opt)), layer.ln1.gamma, layer.ln1.beta);
      const Tensor<T> f = ffn(x, layer.ffn);
      x = layer_norm(add(x, drop(f, opt)), layer.ln2.gamma, layer.ln2.beta);
    }
    return {x, std::move(boxes)};
  }

  /// Vocabulary logits [T x vocab] for every prefix position of `ids`
  /// (ids[0] is normally BOS). Position t never sees ids beyond t.
  Tensor<T> decode(const EncodedImage<T>& enc, std::span<const int> ids, ForwardOptions<T>& opt) const {
    if (ids.empty()) throw DimensionError("decode: empty prefix");
    if (ids.size() > cfg_.max_caption_len + 1) {
      throw DimensionError("decode: prefix of " + std::to_string(ids.size()) + " tokens exceeds max_caption_len + 1 = " +
                           std::to_string(cfg_.max_caption_len + 1));
    }
    const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(cfg_.d_model)));
    Tensor<T> y = add(scale(embedding_lookup(params_.token_embed, ids), emb_scale),
                      positional_table<T>(ids.size(), cfg_.d_model));
    y = drop(y, opt);
    for (std::size_t l = 0; l < params_.decoder.size(); ++l) {
      const auto& layer = params_.decoder[l];
      const Tensor<T> s = multi_head(y, y, layer.self_attn, false, nullptr, RowMask::causal, opt, "decoder_self", l);
      y = layer_norm(add(y, drop(s, opt)), layer.ln1.gamma, layer.ln1.beta);
      const Tensor<T> c =
          multi_head(y, enc.tokens, layer.cross_attn, false, nullptr, RowMask::none, opt, "decoder_cross", l);
      y = layer_norm(add(y, drop(c, opt)), layer.ln2.gamma, layer.ln2.beta);
      const Tensor<T> f = ffn(y, layer.ffn);
      y = layer_norm(add(y, drop(f, opt)), layer.ln3.gamma, layer.ln3.beta);
    }
    return add_bias(matmul(y, params_.w_out), params_.b_out);
  }

  /// Teacher-forced cross-entropy of one caption. `caption` is the encoded
  /// sequence BOS w1 .. wn EOS; inputs drop the last token, targets the first.
  Tensor<T> caption_loss(const EncodedImage<T>& enc, std::span<const int> caption, ForwardOptions<T>& opt) const {
    if (caption.size() < 2) throw DimensionError("caption_loss: caption needs BOS and EOS");
    const auto inputs = caption.first(caption.size() - 1);
    const auto targets = caption.subspan(1);
    return cross_entropy(decode(enc, inputs, opt), targets, kPadId);
  }

  /// Log-probabilities of the next token after `prefix`.
  std::vector<T> next_token_logprobs(const EncodedImage<T>& enc, std::span<const int> prefix) const {
    NoGradGuard ng;
    ForwardOptions<T> opt;
    const Tensor<T> logits = decode(enc, prefix, opt);
    const std::size_t v = logits.cols();
    return log_softmax<T>(logits.data().subspan((logits.rows() - 1) * v, v));
  }

 private:
  Tensor<T> drop(const Tensor<T>& x, ForwardOptions<T>& opt) const {
    if (!opt.train || cfg_.dropout_rate == 0.0) return x;
    if (!opt.rng) throw UsageError("training forward pass needs an Rng for dropout");
    return dropout(x, cfg_.dropout_rate, *opt.rng, true);
  }

  ModelConfig cfg_;
  ModelParams<T> params_;
};

}  // namespace ort
