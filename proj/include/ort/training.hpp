#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ort/data/caption_io.hpp"
#include "ort/data/checkpoint.hpp"
#include "ort/data/dataset.hpp"
#include "ort/model/transformer.hpp"

namespace ort {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 10;
  std::size_t warmup_steps = 20000;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;

  void validate() const {
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  }
};

/// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw UsageError("lr_at: steps are numbered from 1");
  if (warmup == 0) throw ConfigError("lr_at: warmup must be >= 1");
  const double s = static_cast<double>(step);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m, v;

  static AdamState for_params(const NamedParams<T>& params) {
    AdamState s;
    for (const auto& [name, p] : params) {
      s.m.emplace_back(p.size(), T(0));
      s.v.emplace_back(p.size(), T(0));
    }
    return s;
  }
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
template <class T>
void adam_step(NamedParams<T>& params, AdamState<T>& st, double lr) {
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state has " + std::to_string(st.m.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (st.m[i].size() != params[i].second.size() || st.v[i].size() != params[i].second.size()) {
      throw DimensionError("adam_step: moment shape mismatch for '" + params[i].first + "'");
    }
    const auto g = params[i].second.grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw NumericError("non-finite gradient in '" + params[i].first + "' at element " + std::to_string(k) +
                           " (optimizer step " + std::to_string(st.t + 1) + ")");
      }
    }
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].second;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = st.beta1 * m[k] + (1.0 - st.beta1) * gk;
      const double vk = st.beta2 * v[k] + (1.0 - st.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + st.eps));
    }
  }
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(NamedParams<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [name, p] : params) {
      for (auto& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t pairs = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::size_t gate_fallbacks = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool improved = false;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// Line-delimited records in the order they were produced.
  [[nodiscard]] std::string to_jsonl() const {
    std::string out;
    std::size_t s = 0;
    for (const auto& e : epochs) {
      for (; s < steps.size() && steps[s].epoch <= e.epoch; ++s) out += step_json(steps[s]) + "\n";
      out += epoch_json(e) + "\n";
    }
    for (; s < steps.size(); ++s) out += step_json(steps[s]) + "\n";
    return out;
  }

  static RunLog from_jsonl(const std::string& text) {
    RunLog log;
    detail::for_each_jsonl(text, "run log", [&](const Json& j) {
      if (j.at("type") == "step") {
        log.steps.push_back({j.at("step"), j.at("epoch"), j.at("pairs"), j.at("loss"), j.at("lr"),
                             j.at("grad_norm"), j.at("gate_fallbacks")});
      } else {
        log.epochs.push_back({j.at("epoch"), j.at("train_loss"), j.at("val_loss"), j.at("improved")});
      }
    });
    return log;
  }

  friend bool operator==(const RunLog& a, const RunLog& b) { return a.to_jsonl() == b.to_jsonl(); }

 private:
  static std::string step_json(const StepRecord& r) {
    Json j;
    j["type"] = "step";
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["pairs"] = r.pairs;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["grad_norm"] = r.grad_norm;
    j["gate_fallbacks"] = r.gate_fallbacks;
    return j.dump();
  }
  static std::string epoch_json(const EpochRecord& r) {
    Json j;
    j["type"] = "epoch";
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["improved"] = r.improved;
    return j.dump();
  }
};

/// Optional extra scalar loss per training pair, added to the token-level
/// cross-entropy before backpropagation. Sequence-level objectives such as
/// a CIDEr-D reward would attach here; none ships with the library.
using SequenceLossHook = std::function<Tensor<float>(const CaptionModel<float>&, const EncodedImage<float>&,
                                                     const CaptionPair&, ForwardOptions<float>&)>;

/// Number of non-pad prediction targets of an encoded caption.
inline std::size_t target_tokens(const std::vector<int>& ids) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) n += ids[i] != kPadId;
  return n;
}

/// Token-weighted mean cross-entropy over pairs, no dropout.
inline double mean_caption_loss(const CaptionModel<float>& model, const Dataset& ds,
                                const std::vector<CaptionPair>& pairs) {
  NoGradGuard ng;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : pairs) {
    ForwardOptions<float> opt;
    const auto& img = ds.images[pair.image];
    const auto enc = model.encode(img.features, img.boxes, opt);
    const double loss = model.caption_loss(enc, pair.ids, opt).item();
    const std::size_t n = target_tokens(pair.ids);
    total += loss * static_cast<double>(n);
    tokens += n;
  }
  if (tokens == 0) throw ConfigError("no caption tokens to evaluate");
  return total / static_cast<double>(tokens);
}

/// Teacher-forced trainer with Adam, the warmup schedule, per-epoch
/// validation and patience-based early stopping. All randomness is derived
/// from (seed, epoch, step), so a run restored from save_state continues
/// exactly as if it had never stopped.
class Trainer {
 public:
  Trainer(ModelConfig model_cfg, ModelParams<float> init, const Dataset& data, TrainConfig cfg)
      : model_(std::move(model_cfg), deep_copy(init)), data_(&data), cfg_(cfg) {
    cfg_.validate();
    if (data.train.empty()) throw ConfigError("training split is empty");
    if (data.val.empty()) throw ConfigError("validation split is empty");
    params_ = model_.params().named();
    adam_ = AdamState<float>::for_params(params_);
    best_ = deep_copy(model_.params());
  }

  void set_sequence_loss_hook(SequenceLossHook hook) { hook_ = std::move(hook); }

  [[nodiscard]] bool done() const { return stopped_ || epoch_ >= cfg_.epochs; }
  [[nodiscard]] std::size_t epochs_completed() const { return epoch_; }
  [[nodiscard]] std::size_t steps_completed() const { return step_; }
  [[nodiscard]] double best_val_loss() const { return best_val_; }
  [[nodiscard]] bool stopped_early() const { return stopped_; }
  [[nodiscard]] const RunLog& log() const { return log_; }
  [[nodiscard]] const CaptionModel<float>& model() const { return model_; }
  /// Parameters of the epoch with the lowest validation loss so far.
  [[nodiscard]] const ModelParams<float>& best_params() const { return best_; }

  void run_epoch() {
    if (done()) return;
    const Dataset& ds = *data_;
    std::vector<std::size_t> order(ds.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(cfg_.seed).split(kShuffleTag).split(epoch_).shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      ++step_;
      for (auto& [name, p] : params_) p.zero_grad();
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < end; ++i) batch_tokens += target_tokens(ds.train[order[i]].ids);

      AttentionStats stats;
      const Rng step_rng = Rng(cfg_.seed).split(kDropoutTag).split(step_);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const CaptionPair& pair = ds.train[order[i]];
        const auto& img = ds.images[pair.image];
        Rng rng = step_rng.split(i - start);
        ForwardOptions<float> opt;
        opt.train = true;
        opt.rng = &rng;
        opt.stats = &stats;
        const auto enc = model_.encode(img.features, img.boxes, opt);
        const Tensor<float> loss = model_.caption_loss(enc, pair.ids, opt);
        if (!std::isfinite(loss.item())) {
          throw NumericError("non-finite training loss at step " + std::to_string(step_) + " (image '" +
                             img.image_id + "')");
        }
        const std::size_t n = target_tokens(pair.ids);
        const float weight = static_cast<float>(n) / static_cast<float>(batch_tokens);
        Tensor<float> objective = scale(loss, weight);
        if (hook_) objective = add(objective, hook_(model_, enc, pair, opt));
        backward(objective);
        batch_loss += static_cast<double>(loss.item()) * weight;
      }
      const double norm = clip_grad_norm(params_, cfg_.clip_norm);
      const double lr = lr_at(step_, model_.config().d_model, cfg_.warmup_steps);
      adam_step(params_, adam_, lr);
      log_.steps.push_back({step_, epoch_, end - start, batch_loss, lr, norm, stats.gate_fallback_rows});
      epoch_loss += batch_loss * static_cast<double>(batch_tokens);
      epoch_tokens += batch_tokens;
    }
    for (auto& [name, p] : params_) p.zero_grad();

    const double val = mean_caption_loss(model_, ds, ds.val);
    if (!std::isfinite(val)) throw NumericError("non-finite validation loss after epoch " + std::to_string(epoch_));
    const bool improved = val < best_val_;
    if (improved) {
      best_val_ = val;
      bad_epochs_ = 0;
      best_ = deep_copy(model_.params());
    } else {
      ++bad_epochs_;
    }
    log_.epochs.push_back({epoch_, epoch_loss / static_cast<double>(epoch_tokens), val, improved});
    ++epoch_;
    if (bad_epochs_ >= cfg_.early_stop_patience) stopped_ = true;
  }

  void run() {
    while (!done()) run_epoch();
  }

  /// Complete resumable state: weights, best weights, optimizer moments,
  /// counters and the log so far.
  [[nodiscard]] std::vector<char> save_state() const {
    TensorArchive ar;
    std::ostringstream h;
    h << "epoch=" << epoch_ << "\nstep=" << step_ << "\nbad_epochs=" << bad_epochs_ << "\nstopped=" << stopped_
      << "\nadam_t=" << adam_.t << "\nbest_val=" << hex(best_val_) << "\n---\n"
      << log_.to_jsonl();
    ar.header = h.str();
    const auto best = best_.named();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& [name, p] = params_[i];
      ar.tensors.push_back({"param." + name, p.shape(), {p.data().begin(), p.data().end()}});
      ar.tensors.push_back({"best." + name, p.shape(), {best[i].second.data().begin(), best[i].second.data().end()}});
      ar.tensors.push_back({"adam.m." + name, p.shape(), adam_.m[i]});
      ar.tensors.push_back({"adam.v." + name, p.shape(), adam_.v[i]});
    }
    return encode_archive("ORTS", ar);
  }

  void load_state(std::vector<char> bytes, const std::string& what) {
    const TensorArchive ar = decode_archive("ORTS", std::move(bytes), what);
    const auto sep = ar.header.find("---\n");
    if (sep == std::string::npos) throw FormatError(what + ": training state header has no separator");
    std::istringstream is(ar.header.substr(0, sep));
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw FormatError(what + ": training state is missing '" + k + "'");
      return it->second;
    };
    epoch_ = std::stoull(get("epoch"));
    step_ = std::stoull(get("step"));
    bad_epochs_ = std::stoull(get("bad_epochs"));
    stopped_ = get("stopped") == "1";
    adam_.t = std::stoull(get("adam_t"));
    best_val_ = std::strtod(get("best_val").c_str(), nullptr);
    log_ = RunLog::from_jsonl(ar.header.substr(sep + 4));

    std::vector<StoredTensor> cur, best;
    std::map<std::string, const StoredTensor*> moments;
    for (const auto& t : ar.tensors) {
      if (t.name.rfind("param.", 0) == 0) {
        cur.push_back({t.name.substr(6), t.shape, t.data});
      } else if (t.name.rfind("best.", 0) == 0) {
        best.push_back({t.name.substr(5), t.shape, t.data});
      } else {
        moments[t.name] = &t;
      }
    }
    ModelParams<float> current = model_.params();
    assign_tensors(cur, current, what);
    assign_tensors(best, best_, what);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (auto [prefix, slot] : {std::pair{"adam.m.", &adam_.m[i]}, std::pair{"adam.v.", &adam_.v[i]}}) {
        auto it = moments.find(prefix + params_[i].first);
        if (it == moments.end() || it->second->data.size() != slot->size()) {
          throw FormatError(what + ": missing or misshaped optimizer moment for '" + params_[i].first + "'");
        }
        *slot = it->second->data;
      }
    }
  }

 private:
  static constexpr std::uint64_t kShuffleTag = 0x5348;
  static constexpr std::uint64_t kDropoutTag = 0x4452;

  static std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
  }

  CaptionModel<float> model_;
  const Dataset* data_;
  TrainConfig cfg_;
  NamedParams<float> params_;
  AdamState<float> adam_;
  ModelParams<float> best_;
  double best_val_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  bool stopped_ = false;
  RunLog log_;
  SequenceLossHook hook_;
};

}  // namespace ort
