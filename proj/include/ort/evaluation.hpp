#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ort/data/caption_io.hpp"
#include "ort/metrics.hpp"

namespace ort {

struct ImageScores {
  std::string image_id;
  std::string candidate;
  double bleu4 = 0.0;  // smoothed sentence BLEU-4
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::optional<bool> relation_correct;
  std::optional<bool> count_correct;
};

struct EvalReport {
  BleuResult bleu;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::optional<SpatialAccuracy> spatial;
  std::vector<ImageScores> images;
};

/// Aligns single-caption candidate records with reference records (and
/// optionally ground-truth scenes) by image id, then scores everything.
inline EvalReport evaluate(const std::vector<CaptionRecord>& candidates, const std::vector<CaptionRecord>& references,
                           const std::vector<Scene>* scenes = nullptr) {
  std::map<std::string, const CaptionRecord*> refs;
  for (const auto& r : references) refs[r.image_id] = &r;
  std::map<std::string, const Scene*> by_id;
  if (scenes) {
    for (const auto& s : *scenes) by_id[s.image_id] = &s;
  }
  std::vector<Tokens> cand_tokens;
  std::vector<std::vector<Tokens>> ref_tokens;
  std::vector<std::string> cand_text;
  std::vector<Scene> aligned_scenes;
  EvalReport rep;
  for (const auto& c : candidates) {
    if (c.captions.size() != 1) {
      throw FormatError("candidate '" + c.image_id + "' must carry exactly one caption, has " +
                        std::to_string(c.captions.size()));
    }
    auto it = refs.find(c.image_id);
    if (it == refs.end()) throw FormatError("no references for candidate image '" + c.image_id + "'");
    cand_text.push_back(c.captions.front());
    cand_tokens.push_back(tokenize(c.captions.front()));
    std::vector<Tokens> rt;
    for (const auto& r : it->second->captions) rt.push_back(tokenize(r));
    ref_tokens.push_back(std::move(rt));
    if (scenes) {
      auto s = by_id.find(c.image_id);
      if (s == by_id.end()) throw FormatError("no scene ground truth for image '" + c.image_id + "'");
      aligned_scenes.push_back(*s->second);
    }
  }
  rep.bleu = bleu(cand_tokens, ref_tokens);
  const auto cider = cider_d(cand_tokens, ref_tokens);
  rep.cider_d = cider.score;
  if (scenes) rep.spatial = spatial_accuracy(cand_text, aligned_scenes);
  double rouge_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ImageScores s;
    s.image_id = candidates[i].image_id;
    s.candidate = cand_text[i];
    s.bleu4 = bleu_smoothed(cand_tokens[i], ref_tokens[i]);
    s.rouge_l = rouge_l(cand_tokens[i], ref_tokens[i]);
    s.cider_d = cider.per_image[i];
    if (rep.spatial) {
      s.relation_correct = rep.spatial->relation_correct[i];
      s.count_correct = rep.spatial->count_correct[i];
    }
    rouge_sum += s.rouge_l;
    rep.images.push_back(std::move(s));
  }
  rep.rouge_l = candidates.empty() ? 0.0 : rouge_sum / static_cast<double>(candidates.size());
  return rep;
}

/// One row of a system comparison: paired t-test on a per-image metric.
struct ComparisonRow {
  std::string metric;
  std::size_t n = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::optional<TTestResult> test;  // empty when the variance is degenerate
  std::string note;
};

inline std::vector<ComparisonRow> compare(const EvalReport& a, const EvalReport& b) {
  std::map<std::string, const ImageScores*> bi;
  for (const auto& s : b.images) bi[s.image_id] = &s;
  struct Metric {
    const char* name;
    std::function<std::optional<double>(const ImageScores&)> get;
  };
  auto as01 = [](const std::optional<bool>& v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return *v ? 1.0 : 0.0;
  };
  const std::vector<Metric> metrics = {
      {"BLEU-4", [](const ImageScores& s) { return std::optional<double>(s.bleu4); }},
      {"ROUGE-L", [](const ImageScores& s) { return std::optional<double>(s.rouge_l); }},
      {"CIDEr-D", [](const ImageScores& s) { return std::optional<double>(s.cider_d); }},
      {"Relation", [&](const ImageScores& s) { return as01(s.relation_correct); }},
      {"Count", [&](const ImageScores& s) { return as01(s.count_correct); }}};
  std::vector<ComparisonRow> rows;
  for (const auto& m : metrics) {
    std::vector<double> xa, xb;
    for (const auto& s : a.images) {
      auto it = bi.find(s.image_id);
      if (it == bi.end()) continue;
      const auto va = m.get(s), vb = m.get(*it->second);
      if (va && vb) {
        xa.push_back(*va);
        xb.push_back(*vb);
      }
    }
    ComparisonRow row;
    row.metric = m.name;
    row.n = xa.size();
    for (double v : xa) row.mean_a += v;
    for (double v : xb) row.mean_b += v;
    if (row.n) {
      row.mean_a /= static_cast<double>(row.n);
      row.mean_b /= static_cast<double>(row.n);
    }
    try {
      row.test = paired_t_test(xa, xb);
    } catch (const NumericError& e) {
      row.note = e.what();
    } catch (const UsageError& e) {
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const BleuResult& b) {
  Json j;
  for (std::size_t n = 0; n < b.scores.size(); ++n) j["BLEU-" + std::to_string(n + 1)] = b.scores[n];
  j["precisions"] = b.precisions;
  j["brevity_penalty"] = b.brevity_penalty;
  if (!b.diagnostic.empty()) j["diagnostic"] = b.diagnostic;
  return j;
}

inline Json to_json(const EvalReport& r) {
  Json j;
  j["corpus"] = to_json(r.bleu);
  j["corpus"]["ROUGE-L"] = r.rouge_l;
  j["corpus"]["CIDEr-D"] = r.cider_d;
  if (r.spatial) {
    j["corpus"]["relation_acc"] = r.spatial->relation_acc;
    j["corpus"]["relation_scenes"] = r.spatial->relation_scenes;
    j["corpus"]["count_acc"] = r.spatial->count_acc;
    j["corpus"]["count_scenes"] = r.spatial->count_scenes;
  }
  Json rows = Json::array();
  for (const auto& s : r.images) {
    Json row;
    row["image_id"] = s.image_id;
    row["candidate"] = s.candidate;
    row["BLEU-4"] = s.bleu4;
    row["ROUGE-L"] = s.rouge_l;
    row["CIDEr-D"] = s.cider_d;
    row["relation_correct"] = s.relation_correct ? Json(*s.relation_correct) : Json(nullptr);
    row["count_correct"] = s.count_correct ? Json(*s.count_correct) : Json(nullptr);
    rows.push_back(std::move(row));
  }
  j["per_image"] = rows;
  return j;
}

inline Json to_json(const std::vector<ComparisonRow>& rows, double alpha = kSignificanceAlpha) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["metric"] = r.metric;
    j["n"] = r.n;
    j["mean_a"] = r.mean_a;
    j["mean_b"] = r.mean_b;
    if (r.test) {
      j["t"] = r.test->t;
      j["dof"] = r.test->dof;
      j["p_two_tailed"] = r.test->p_two_tailed;
      j["significant"] = r.test->significant(alpha);
    } else {
      j["t"] = nullptr;
      j["p_two_tailed"] = nullptr;
      j["significant"] = false;
      j["note"] = r.note;
    }
    out.push_back(std::move(j));
  }
  return out;
}

/// Plain-text rendering; '*' marks p < alpha.
inline std::string render_comparison(const std::vector<ComparisonRow>& rows, double alpha = kSignificanceAlpha) {
  std::string out = "metric      n      mean_A    mean_B    t         p\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.test) {
      std::snprintf(buf, sizeof(buf), "%-10s %5zu  %8.4f  %8.4f  %8.4f  %.4g%s\n", r.metric.c_str(), r.n, r.mean_a,
                    r.mean_b, r.test->t, r.test->p_two_tailed, r.test->significant(alpha) ? " *" : "");
    } else {
      std::snprintf(buf, sizeof(buf), "%-10s %5zu  %8.4f  %8.4f  n/a       n/a (%s)\n", r.metric.c_str(), r.n,
                    r.mean_a, r.mean_b, r.note.c_str());
    }
    out += buf;
  }
  char tail[64];
  std::snprintf(tail, sizeof(tail), "* significant at alpha=%.2f (two-tailed paired t-test)\n", alpha);
  return out + tail;
}

}  // namespace ort
