#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "ort/data/scene.hpp"
#include "ort/data/vocab.hpp"
#include "ort/errors.hpp"

namespace ort {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, int>;

inline NgramCounts ngram_counts(const Tokens& words, std::size_t n) {
  NgramCounts out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) ++out[Tokens(words.begin() + i, words.begin() + i + n)];
  return out;
}

// ---------------------------------------------------------------- BLEU

struct BleuResult {
  std::vector<double> scores;      // scores[k] = BLEU-(k+1)
  std::vector<double> precisions;  // modified n-gram precision, n = 1..n_max
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  std::string diagnostic;
};

namespace detail {

/// Reference length closest to c; ties go to the shorter reference.
inline std::size_t closest_ref_length(std::size_t c, const std::vector<Tokens>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t x) { return x > c ? x - c : c - x; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

/// Candidate n-gram count clipped by the maximum count in any reference.
inline std::pair<std::size_t, std::size_t> clipped_matches(const Tokens& cand, const std::vector<Tokens>& refs,
                                                           std::size_t n) {
  const auto c = ngram_counts(cand, n);
  std::map<Tokens, int> max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
  }
  std::size_t matched = 0, total = 0;
  for (const auto& [g, k] : c) {
    total += static_cast<std::size_t>(k);
    auto it = max_ref.find(g);
    if (it != max_ref.end()) matched += static_cast<std::size_t>(std::min(k, it->second));
  }
  return {matched, total};
}

inline void require_references(const std::vector<std::vector<Tokens>>& refs, std::size_t n_candidates) {
  if (refs.size() != n_candidates) {
    throw DimensionError(std::to_string(n_candidates) + " candidates but " + std::to_string(refs.size()) +
                         " reference sets");
  }
  for (const auto& r : refs) {
    if (r.empty()) throw UsageError("every image needs at least one reference caption");
  }
}

}  // namespace detail

/// Corpus BLEU: clipped n-gram counts and lengths are summed over the corpus
/// before the precisions, geometric mean and brevity penalty are formed.
inline BleuResult bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                       std::size_t n_max = 4) {
  detail::require_references(references, candidates.size());
  BleuResult res;
  res.scores.assign(n_max, 0.0);
  res.precisions.assign(n_max, 0.0);
  std::vector<std::size_t> matched(n_max, 0), total(n_max, 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    res.candidate_length += candidates[i].size();
    res.reference_length += detail::closest_ref_length(candidates[i].size(), references[i]);
    for (std::size_t n = 1; n <= n_max; ++n) {
      const auto [m, t] = detail::clipped_matches(candidates[i], references[i], n);
      matched[n - 1] += m;
      total[n - 1] += t;
    }
  }
  if (res.candidate_length == 0) {
    res.diagnostic = candidates.empty() ? "empty candidate corpus" : "all candidates are empty";
    return res;
  }
  for (std::size_t n = 0; n < n_max; ++n) {
    res.precisions[n] = total[n] ? static_cast<double>(matched[n]) / static_cast<double>(total[n]) : 0.0;
  }
  const double c = static_cast<double>(res.candidate_length), r = static_cast<double>(res.reference_length);
  res.brevity_penalty = c < r ? std::exp(1.0 - r / c) : 1.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < n_max; ++n) {
    if (res.precisions[n] <= 0.0) break;  // this and every higher order stay 0
    log_sum += std::log(res.precisions[n]);
    res.scores[n] = res.brevity_penalty * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return res;
}

/// Sentence BLEU-n_max with add-one smoothing on the n > 1 precisions, used
/// for per-image scores in paired tests.
inline double bleu_smoothed(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t n_max = 4) {
  if (references.empty()) throw UsageError("every image needs at least one reference caption");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    const auto [m, t] = detail::clipped_matches(candidate, references, n);
    const double p = n == 1 ? (t ? static_cast<double>(m) / static_cast<double>(t) : 0.0)
                            : (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(detail::closest_ref_length(candidate.size(), references));
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n_max));
}

// ---------------------------------------------------------------- ROUGE-L

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS F-measure (recall weighted by beta), best over the references.
inline double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta = 1.2) {
  if (references.empty()) throw UsageError("every image needs at least one reference caption");
  double best = 0.0;
  for (const auto& ref : references) {
    const std::size_t l = lcs_length(candidate, ref);
    if (l == 0) continue;
    const double p = static_cast<double>(l) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(l) / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

// ---------------------------------------------------------------- CIDEr-D

struct CiderResult {
  double score = 0.0;               // corpus mean
  std::vector<double> per_image;
};

/// CIDEr-D with n = 1..4, idf from the reference sets (one document per
/// image), clipped candidate weights, Gaussian length penalty and x10 scale.
inline CiderResult cider_d(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                           double sigma = 6.0) {
  detail::require_references(references, candidates.size());
  const std::size_t n_images = candidates.size();
  if (n_images < 2) {
    throw NumericError("CIDEr-D idf is degenerate for a corpus of " + std::to_string(n_images) +
                       " image(s); need at least 2");
  }
  constexpr std::size_t kMaxN = 4;
  std::map<Tokens, int> df;
  for (const auto& refs : references) {
    std::map<Tokens, bool> seen;
    for (const auto& r : refs) {
      for (std::size_t n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, k] : ngram_counts(r, n)) seen[g] = true;
      }
    }
    for (const auto& [g, v] : seen) ++df[g];
  }
  const double log_n = std::log(static_cast<double>(n_images));
  auto weighted = [&](const Tokens& words, std::size_t n) {
    std::map<Tokens, double> vec;
    for (const auto& [g, k] : ngram_counts(words, n)) {
      auto it = df.find(g);
      const double idf = it == df.end() ? 0.0 : log_n - std::log(static_cast<double>(it->second));
      vec[g] = static_cast<double>(k) * idf;
    }
    return vec;
  };
  auto norm = [](const std::map<Tokens, double>& v) {
    double s = 0.0;
    for (const auto& [g, x] : v) s += x * x;
    return std::sqrt(s);
  };
  CiderResult res;
  for (std::size_t i = 0; i < n_images; ++i) {
    double total = 0.0;
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto vc = weighted(candidates[i], n);
      const double nc = norm(vc);
      double per_n = 0.0;
      for (const auto& ref : references[i]) {
        const auto vr = weighted(ref, n);
        const double nr = norm(vr);
        if (nc == 0.0 || nr == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) dot += std::min(x, it->second) * it->second;
        }
        const double delta = static_cast<double>(candidates[i].size()) - static_cast<double>(ref.size());
        per_n += dot / (nc * nr) * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      }
      total += per_n / static_cast<double>(references[i].size());
    }
    res.per_image.push_back(10.0 * total / static_cast<double>(kMaxN));
  }
  double s = 0.0;
  for (double v : res.per_image) s += v;
  res.score = s / static_cast<double>(n_images);
  return res;
}

// ---------------------------------------------------------------- spatial

/// Relation and count statements read off a generated caption.
struct ParsedCaption {
  struct RelationClaim {
    int subject = -1;
    Relation relation = Relation::next_to;
    int reference = -1;
  };
  std::optional<RelationClaim> relation;
  std::map<int, int> counts;  // category -> stated multiplicity
  bool count_conflict = false;
};

namespace detail {

inline std::optional<int> category_of(const std::string& word, bool plural_form) {
  const auto& names = category_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    if ((plural_form ? plural(names[c]) : names[c]) == word) return static_cast<int>(c);
  }
  return std::nullopt;
}

inline std::optional<int> count_word(const std::string& w) {
  static const std::map<std::string, int> words = {{"a", 1},   {"an", 1},   {"one", 1}, {"two", 2},
                                                   {"three", 3}, {"four", 4}, {"five", 5}, {"six", 6}};
  auto it = words.find(w);
  if (it == words.end()) return std::nullopt;
  return it->second;
}

}  // namespace detail

inline ParsedCaption parse_caption(const std::string& caption) {
  const Tokens w = tokenize(caption);
  ParsedCaption out;
  // Relation: the only relation phrase, with the nearest category noun on
  // each side.
  static const std::vector<std::pair<Tokens, Relation>> phrases = {
      {{"to", "the", "left", "of"}, Relation::left_of},
      {{"to", "the", "right", "of"}, Relation::right_of},
      {{"above"}, Relation::above},
      {{"below"}, Relation::below},
      {{"next", "to"}, Relation::next_to}};
  std::vector<std::pair<std::size_t, std::pair<std::size_t, Relation>>> hits;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const auto& [p, rel] : phrases) {
      if (i + p.size() <= w.size() && std::equal(p.begin(), p.end(), w.begin() + static_cast<std::ptrdiff_t>(i))) {
        hits.push_back({i, {p.size(), rel}});
      }
    }
  }
  if (hits.size() == 1) {
    const auto [at, what] = hits.front();
    std::optional<int> subject, reference;
    for (std::size_t i = at; i-- > 0;) {
      if ((subject = detail::category_of(w[i], false))) break;
    }
    for (std::size_t i = at + what.first; i < w.size() && !reference; ++i) reference = detail::category_of(w[i], false);
    if (subject && reference) out.relation = ParsedCaption::RelationClaim{*subject, what.second, *reference};
  }
  // Counts: every "<count word> <noun>" pair, singular after a/an/one.
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const auto k = detail::count_word(w[i]);
    if (!k) continue;
    const auto c = detail::category_of(w[i + 1], *k != 1);
    if (!c) continue;
    if (out.counts.count(*c) && out.counts[*c] != *k) out.count_conflict = true;
    out.counts[*c] = *k;
  }
  return out;
}

/// A relation caption is correct when it names both objects of a two-object
/// scene and its relation phrase matches their boxes.
inline bool relation_correct(const ParsedCaption& p, const Scene& scene) {
  if (!p.relation || !has_relation_truth(scene)) return false;
  const auto& r = *p.relation;
  const auto& a = scene.objects[0];
  const auto& b = scene.objects[1];
  const SceneObject* subj = r.subject == a.category ? &a : r.subject == b.category ? &b : nullptr;
  const SceneObject* ref = r.reference == a.category ? &a : r.reference == b.category ? &b : nullptr;
  if (!subj || !ref || subj == ref) return false;
  return classify_relation(subj->box, ref->box) == r.relation;
}

/// A count caption is correct when every category present more than once
/// is stated with its multiplicity and no stated count contradicts the
/// scene.
inline bool count_correct(const ParsedCaption& p, const Scene& scene) {
  if (p.count_conflict) return false;
  const auto truth = category_counts(scene);
  for (const auto& [c, k] : p.counts) {
    auto it = truth.find(c);
    if (it == truth.end() || it->second != k) return false;
  }
  for (const auto& [c, k] : truth) {
    if (k >= 2 && !p.counts.count(c)) return false;
  }
  return true;
}

struct SpatialAccuracy {
  double relation_acc = 0.0;
  double count_acc = 0.0;
  std::size_t relation_scenes = 0;
  std::size_t count_scenes = 0;
  std::vector<std::optional<bool>> relation_correct;  // per image; empty when no relation truth
  std::vector<std::optional<bool>> count_correct;
};

/// Relation accuracy over scenes with a relation ground truth, count
/// accuracy over scenes with a repeated category. Unparseable captions count
/// as incorrect.
inline SpatialAccuracy spatial_accuracy(const std::vector<std::string>& captions, const std::vector<Scene>& scenes) {
  if (captions.size() != scenes.size()) {
    throw DimensionError(std::to_string(captions.size()) + " captions for " + std::to_string(scenes.size()) +
                         " scenes");
  }
  SpatialAccuracy acc;
  std::size_t rel_ok = 0, cnt_ok = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto p = parse_caption(captions[i]);
    std::optional<bool> r, c;
    if (has_relation_truth(scenes[i])) {
      r = relation_correct(p, scenes[i]);
      ++acc.relation_scenes;
      rel_ok += *r;
    }
    if (has_count_truth(scenes[i])) {
      c = count_correct(p, scenes[i]);
      ++acc.count_scenes;
      cnt_ok += *c;
    }
    acc.relation_correct.push_back(r);
    acc.count_correct.push_back(c);
  }
  if (acc.relation_scenes) acc.relation_acc = static_cast<double>(rel_ok) / static_cast<double>(acc.relation_scenes);
  if (acc.count_scenes) acc.count_acc = static_cast<double>(cnt_ok) / static_cast<double>(acc.count_scenes);
  return acc;
}

// ---------------------------------------------------------------- t-test

inline constexpr double kSignificanceAlpha = 0.05;

struct TTestResult {
  double t = 0.0;
  std::size_t dof = 0;
  double p_two_tailed = 1.0;
  double mean_difference = 0.0;

  [[nodiscard]] bool significant(double alpha = kSignificanceAlpha) const { return p_two_tailed < alpha; }
};

/// Two-tailed p-value of Student's t with `dof` degrees of freedom.
inline double student_t_two_tailed_p(double t, double dof) {
  if (!(dof > 0)) throw NumericError("t distribution needs positive degrees of freedom");
  return boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + t * t));
}

/// Paired two-tailed t-test on per-image scores of systems A and B.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("paired t-test needs aligned scores, got " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw UsageError("paired t-test needs at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw NumericError("degenerate variance: all paired differences are identical");
  TTestResult r;
  r.mean_difference = mean;
  r.dof = n - 1;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_two_tailed = student_t_two_tailed_p(r.t, static_cast<double>(r.dof));
  return r;
}

}  // namespace ort
