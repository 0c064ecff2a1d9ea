#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ort/errors.hpp"
#include "ort/model/transformer.hpp"

namespace ort {

enum class LengthNorm { none, by_length };

struct DecodeConfig {
  std::size_t beam_size = 1;
  std::size_t max_len = 20;  // generated words, EOS excluded
  LengthNorm length_norm = LengthNorm::none;
  int bos_id = kBosId;
  int eos_id = kEosId;
  std::vector<int> banned;  // never emitted (e.g. PAD, BOS)

  void validate(std::size_t vocab_size) const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (beam_size > vocab_size) {
      throw ConfigError("beam_size " + std::to_string(beam_size) + " exceeds vocabulary size " +
                        std::to_string(vocab_size));
    }
  }
};

/// Log-probabilities of the next token given the prefix (which starts with
/// BOS). Must return the same vocabulary width on every call.
using StepScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, EOS included when finished by EOS
  double score = 0.0;       // summed log-probability
  bool finished = false;

  /// Words only: EOS stripped.
  [[nodiscard]] std::vector<int> words(int eos_id = kEosId) const {
    std::vector<int> out;
    for (int t : tokens) {
      if (t == eos_id) break;
      out.push_back(t);
    }
    return out;
  }
};

namespace detail {

inline double ranking_score(const Hypothesis& h, LengthNorm norm) {
  if (norm == LengthNorm::by_length && !h.tokens.empty()) return h.score / static_cast<double>(h.tokens.size());
  return h.score;
}

/// Higher score first; equal scores broken by lexicographically smaller
/// token sequence.
inline bool better(const Hypothesis& a, const Hypothesis& b, LengthNorm norm) {
  const double sa = ranking_score(a, norm), sb = ranking_score(b, norm);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

inline bool is_banned(int token, const DecodeConfig& cfg) {
  return std::find(cfg.banned.begin(), cfg.banned.end(), token) != cfg.banned.end();
}

inline std::vector<double> score_prefix(const StepScorer& scorer, int bos, const std::vector<int>& tokens,
                                        std::size_t vocab) {
  std::vector<int> prefix{bos};
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  auto lp = scorer(prefix);
  if (lp.size() != vocab) {
    throw DimensionError("scorer returned " + std::to_string(lp.size()) + " log-probabilities, expected " +
                         std::to_string(vocab));
  }
  return lp;
}

}  // namespace detail

/// Beam search over summed log-probabilities. Finished hypotheses (EOS, or
/// max_len words) stay in the pool and compete with live expansions every
/// step. Returns the final pool, best first.
inline std::vector<Hypothesis> beam_search(const StepScorer& scorer, std::size_t vocab_size, const DecodeConfig& cfg) {
  if (cfg.beam_size < 1) throw ConfigError("beam_size must be >= 1");
  std::vector<Hypothesis> beams{Hypothesis{}};
  if (cfg.max_len == 0) {
    beams.front().finished = true;
    return beams;
  }
  auto cmp = [&](const Hypothesis& a, const Hypothesis& b) { return detail::better(a, b, cfg.length_norm); };
  while (std::any_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return !h.finished; })) {
    std::vector<Hypothesis> pool;
    for (const auto& h : beams) {
      if (h.finished) {
        pool.push_back(h);
        continue;
      }
      const auto lp = detail::score_prefix(scorer, cfg.bos_id, h.tokens, vocab_size);
      for (std::size_t t = 0; t < vocab_size; ++t) {
        const int tok = static_cast<int>(t);
        if (detail::is_banned(tok, cfg)) continue;
        Hypothesis next = h;
        next.tokens.push_back(tok);
        next.score += lp[t];
        next.finished = tok == cfg.eos_id || next.tokens.size() >= cfg.max_len;
        pool.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(cfg.beam_size, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), cmp);
    pool.resize(keep);
    beams = std::move(pool);
  }
  std::sort(beams.begin(), beams.end(), cmp);
  return beams;
}

/// Argmax at every step (ties to the lowest token id) until EOS or
/// max_len words.
inline Hypothesis greedy_decode(const StepScorer& scorer, std::size_t vocab_size, const DecodeConfig& cfg) {
  Hypothesis h;
  while (!h.finished && h.tokens.size() < cfg.max_len) {
    const auto lp = detail::score_prefix(scorer, cfg.bos_id, h.tokens, vocab_size);
    int best = -1;
    for (std::size_t t = 0; t < vocab_size; ++t) {
      if (detail::is_banned(static_cast<int>(t), cfg)) continue;
      // Compared as running totals, exactly as beam search ranks them.
      if (best < 0 || h.score + lp[t] > h.score + lp[static_cast<std::size_t>(best)]) best = static_cast<int>(t);
    }
    if (best < 0) throw ConfigError("every token is banned");
    h.tokens.push_back(best);
    h.score += lp[static_cast<std::size_t>(best)];
    h.finished = best == cfg.eos_id;
  }
  h.finished = true;
  return h;
}

/// Scorer backed by a captioning model and one encoded image.
template <class T>
StepScorer model_scorer(const CaptionModel<T>& model, const EncodedImage<T>& enc) {
  return [&model, &enc](std::span<const int> prefix) {
    const auto lp = model.next_token_logprobs(enc, prefix);
    return std::vector<double>(lp.begin(), lp.end());
  };
}

/// Best caption (word ids) for one image. Decoding stops at the model's
/// max_caption_len when that is shorter than cfg.max_len.
template <class T>
std::vector<int> caption_image(const CaptionModel<T>& model, const Tensor<T>& features,
                               const std::vector<BoundingBox>& boxes, DecodeConfig cfg) {
  cfg.validate(model.config().vocab_size);
  cfg.max_len = std::min(cfg.max_len, model.config().max_caption_len);
  NoGradGuard ng;
  ForwardOptions<T> opt;
  const auto enc = model.encode(features, boxes, opt);
  const auto scorer = model_scorer(model, enc);
  const std::size_t v = model.config().vocab_size;
  if (cfg.beam_size == 1) return greedy_decode(scorer, v, cfg).words(cfg.eos_id);
  return beam_search(scorer, v, cfg).front().words(cfg.eos_id);
}

}  // namespace ort
