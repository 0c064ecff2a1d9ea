#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ort/decoding.hpp"
#include "ort/evaluation.hpp"
#include "ort/training.hpp"

namespace ort {

/// Small architecture that trains in minutes on one CPU core.
inline ModelConfig toy_model_config() {
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 4;
  c.n_layers = 2;
  c.d_ff = 256;
  c.d_feature = 32;
  return c;
}

inline TrainConfig toy_train_config() {
  TrainConfig t;
  t.epochs = 10;
  t.warmup_steps = 400;
  return t;
}

/// Decoding used when scoring models: no PAD/BOS/UNK emission.
inline DecodeConfig eval_decode_config(std::size_t beam_size, std::size_t max_len) {
  DecodeConfig d;
  d.beam_size = beam_size;
  d.max_len = max_len;
  d.banned = {kPadId, kBosId, kUnkId};
  return d;
}

/// The five encoder variants compared by the ablation, baseline first.
inline std::vector<EncoderMode> ablation_variants() {
  return {encoder_mode_from_string("standard"), encoder_mode_from_string("ordered:size"),
          encoder_mode_from_string("ordered:ltr"), encoder_mode_from_string("ordered:ttb"),
          encoder_mode_from_string("geometric")};
}

/// Decodes every image in `which` and scores the captions against the
/// corpus references and scene layouts.
inline EvalReport evaluate_model(const CaptionModel<float>& model, const Dataset& ds, const Corpus& corpus,
                                 const std::vector<std::size_t>& which, const Vocab& vocab, const DecodeConfig& dc) {
  std::vector<CaptionRecord> cands, refs;
  std::vector<Scene> scenes;
  for (auto i : which) {
    const auto& img = ds.images[i];
    const auto words = caption_image(model, img.features, img.boxes, dc);
    cands.push_back({img.image_id, {vocab.decode(words)}});
    refs.push_back(corpus.captions[i]);
    scenes.push_back(corpus.scenes[i]);
  }
  return evaluate(cands, refs, &scenes);
}

struct AblationRun {
  EncoderMode mode;
  std::uint64_t seed = 0;
  double val_loss = 0.0;
  std::size_t epochs_run = 0;
  double seconds = 0.0;
  EvalReport eval;
};

struct AblationConfig {
  ModelConfig model = toy_model_config();
  TrainConfig train = toy_train_config();
  DecodeConfig decode = eval_decode_config(2, 20);
  std::vector<EncoderMode> variants = ablation_variants();
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t jobs = 1;
};

struct VariantSummary {
  EncoderMode mode;
  std::vector<const AblationRun*> runs;  // in seed order
  double mean_val_loss = 0, sd_val_loss = 0;
  double mean_relation = 0, sd_relation = 0;
  double mean_count = 0, sd_count = 0;
};

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

/// Pooled sample standard deviation of two groups.
inline double pooled_sd(const std::vector<double>& a, const std::vector<double>& b) {
  const auto [ma, sa] = mean_sd(a);
  const auto [mb, sb] = mean_sd(b);
  const double dof = static_cast<double>(a.size() + b.size()) - 2.0;
  if (dof <= 0) return 0.0;
  return std::sqrt(((static_cast<double>(a.size()) - 1) * sa * sa + (static_cast<double>(b.size()) - 1) * sb * sb) /
                   dof);
}

struct AblationReport {
  std::vector<AblationRun> runs;  // variant-major, then seed

  [[nodiscard]] std::vector<VariantSummary> summaries() const {
    std::vector<VariantSummary> out;
    for (const auto& r : runs) {
      auto it = std::find_if(out.begin(), out.end(), [&](const VariantSummary& s) { return s.mode == r.mode; });
      if (it == out.end()) {
        out.push_back({r.mode, {}});
        it = out.end() - 1;
      }
      it->runs.push_back(&r);
    }
    for (auto& s : out) {
      std::vector<double> v, rel, cnt;
      for (const auto* r : s.runs) {
        v.push_back(r->val_loss);
        rel.push_back(r->eval.spatial->relation_acc);
        cnt.push_back(r->eval.spatial->count_acc);
      }
      std::tie(s.mean_val_loss, s.sd_val_loss) = mean_sd(v);
      std::tie(s.mean_relation, s.sd_relation) = mean_sd(rel);
      std::tie(s.mean_count, s.sd_count) = mean_sd(cnt);
    }
    return out;
  }

  [[nodiscard]] const AblationRun* find(const EncoderMode& m, std::uint64_t seed) const {
    for (const auto& r : runs) {
      if (r.mode == m && r.seed == seed) return &r;
    }
    return nullptr;
  }

  /// Paired test of per-image relation correctness, `a` against `b`, for
  /// one seed.
  [[nodiscard]] std::optional<TTestResult> relation_test(const EncoderMode& a, const EncoderMode& b,
                                                         std::uint64_t seed, std::string* note = nullptr) const {
    const auto* ra = find(a, seed);
    const auto* rb = find(b, seed);
    if (!ra || !rb) return std::nullopt;
    for (const auto& row : compare(ra->eval, rb->eval)) {
      if (row.metric != "Relation") continue;
      if (note) *note = row.note;
      return row.test;
    }
    return std::nullopt;
  }
};

/// Table-shaped report: one row per variant with per-seed values, mean and
/// standard deviation, plus per-seed relation t-tests of every variant
/// against the first (baseline) variant.
inline Json to_json(const AblationReport& rep) {
  Json j;
  Json rows = Json::array();
  const auto sums = rep.summaries();
  for (const auto& s : sums) {
    Json row;
    row["variant"] = to_string(s.mode);
    Json seeds = Json::array();
    for (const auto* r : s.runs) {
      seeds.push_back({{"seed", r->seed},
                       {"val_loss", r->val_loss},
                       {"relation_acc", r->eval.spatial->relation_acc},
                       {"count_acc", r->eval.spatial->count_acc},
                       {"BLEU-4", r->eval.bleu.scores.back()},
                       {"CIDEr-D", r->eval.cider_d},
                       {"epochs", r->epochs_run}});
    }
    row["per_seed"] = seeds;
    row["val_loss"] = {{"mean", s.mean_val_loss}, {"sd", s.sd_val_loss}};
    row["relation_acc"] = {{"mean", s.mean_relation}, {"sd", s.sd_relation}};
    row["count_acc"] = {{"mean", s.mean_count}, {"sd", s.sd_count}};
    rows.push_back(std::move(row));
  }
  j["variants"] = rows;
  Json tests = Json::array();
  if (!sums.empty()) {
    for (std::size_t v = 1; v < sums.size(); ++v) {
      for (const auto* r : sums[v].runs) {
        std::string note;
        const auto t = rep.relation_test(sums[v].mode, sums.front().mode, r->seed, &note);
        Json row{{"variant", to_string(sums[v].mode)}, {"baseline", to_string(sums.front().mode)}, {"seed", r->seed}};
        if (t) {
          row["t"] = t->t;
          row["dof"] = t->dof;
          row["p_two_tailed"] = t->p_two_tailed;
          row["significant"] = t->significant();
        } else {
          row["t"] = nullptr;
          row["p_two_tailed"] = nullptr;
          row["significant"] = false;
          row["note"] = note;
        }
        tests.push_back(std::move(row));
      }
    }
  }
  j["relation_t_tests"] = tests;
  return j;
}

inline std::string render_ablation(const AblationReport& rep) {
  std::string out = "variant        val_loss (mean +- sd)   relation_acc        count_acc\n";
  char buf[200];
  for (const auto& s : rep.summaries()) {
    std::snprintf(buf, sizeof(buf), "%-13s  %.4f +- %.4f       %.3f +- %.3f     %.3f +- %.3f\n",
                  to_string(s.mode).c_str(), s.mean_val_loss, s.sd_val_loss, s.mean_relation, s.sd_relation,
                  s.mean_count, s.sd_count);
    out += buf;
  }
  return out;
}

/// Trains and scores one (variant, seed) cell on the validation split.
inline AblationRun run_ablation_cell(const Corpus& corpus, const Vocab& vocab, const Dataset& ds,
                                     const AblationConfig& cfg, const EncoderMode& mode, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc = cfg.model;
  mc.mode = mode;
  mc.vocab_size = vocab.size();
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  Trainer trainer(mc, init_params<float>(mc, seed), ds, tc);
  trainer.run();
  const CaptionModel<float> best(mc, trainer.best_params());
  AblationRun run;
  run.mode = mode;
  run.seed = seed;
  run.val_loss = trainer.best_val_loss();
  run.epochs_run = trainer.epochs_completed();
  run.eval = evaluate_model(best, ds, corpus, corpus.val, vocab, cfg.decode);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

/// Every variant x seed on one shared corpus and vocabulary. Cells are
/// independent; `jobs` > 1 runs them on worker threads, and results are
/// stored by cell index so the report does not depend on scheduling.
inline AblationReport run_ablation(const Corpus& corpus, const AblationConfig& cfg,
                                   const std::function<void(const AblationRun&)>& on_done = {}) {
  const Vocab vocab = build_vocab(corpus.captions, corpus.train);
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  const Dataset ds = make_dataset(corpus, vocab, mc.max_caption_len);
  struct Cell {
    EncoderMode mode;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& m : cfg.variants) {
    for (auto s : cfg.seeds) cells.push_back({m, s});
  }
  AblationReport rep;
  rep.runs.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      try {
        rep.runs[i] = run_ablation_cell(corpus, vocab, ds, cfg, cells[i].mode, cells[i].seed);
        if (on_done) {
          std::lock_guard lock(mu);
          on_done(rep.runs[i]);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rep;
}

}  // namespace ort
