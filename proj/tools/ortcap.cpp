// ortcap: corpus generation, training, captioning, evaluation, ablation and
// attention export for the object-relation captioner.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ort/ablation.hpp"
#include "ort/data/checkpoint.hpp"
#include "ort/data/corpus_files.hpp"

namespace {

using namespace ort;

std::string default_data_dir() {
  const char* env = std::getenv("ORT_DATA_DIR");
  return env && *env ? env : "data";
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) throw FormatError(what + " '" + path + "' does not exist");
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw ConfigError("cannot create directory '" + parent.string() + "': " + ec.message());
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  ensure_parent(path);
  io::write_text(path, text);
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 1;
}

/// Architecture and schedule flags shared by train and ablate. Unset flags
/// keep the profile value.
struct ModelFlags {
  std::size_t d_model = 0, heads = 0, layers = 0, d_ff = 0, max_caption_len = 0;
  double dropout = -1.0;
  std::size_t epochs = 0, batch_size = 0, warmup = 0, patience = 0;

  void add(CLI::App* app) {
    app->add_option("--d-model", d_model, "model width")->check(CLI::PositiveNumber);
    app->add_option("--heads", heads, "attention heads")->check(CLI::PositiveNumber);
    app->add_option("--layers", layers, "encoder and decoder layers")->check(CLI::PositiveNumber);
    app->add_option("--d-ff", d_ff, "feed-forward width")->check(CLI::PositiveNumber);
    app->add_option("--max-caption-len", max_caption_len, "caption words kept for training")
        ->check(CLI::PositiveNumber);
    app->add_option("--dropout", dropout, "dropout rate")->check(CLI::Range(0.0, 0.999));
    app->add_option("--epochs", epochs, "maximum epochs")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size, "caption pairs per update (default 10)")->check(CLI::PositiveNumber);
    app->add_option("--warmup", warmup, "learning-rate warmup steps")->check(CLI::PositiveNumber);
    app->add_option("--patience", patience, "epochs without improvement before stopping")
        ->check(CLI::PositiveNumber);
  }

  void apply(ModelConfig& m, TrainConfig& t) const {
    if (d_model) m.d_model = d_model;
    if (heads) m.n_heads = heads;
    if (layers) m.n_layers = layers;
    if (d_ff) m.d_ff = d_ff;
    if (max_caption_len) m.max_caption_len = max_caption_len;
    if (dropout >= 0.0) m.dropout_rate = dropout;
    if (epochs) t.epochs = epochs;
    if (batch_size) t.batch_size = batch_size;
    if (warmup) t.warmup_steps = warmup;
    if (patience) t.early_stop_patience = patience;
  }
};

Corpus load_corpus(const std::string& dir) { return read_corpus(dir).corpus; }

// gen-data ------------------------------------------------------------------

struct GenFlags {
  std::uint64_t seed = 1;
  std::size_t scenes = 2000, categories = 8, feature_dim = 32;
  std::string out_dir = default_data_dir();
};

void cmd_gen_data(const GenFlags& f) {
  CorpusConfig cfg;
  cfg.n_scenes = f.scenes;
  cfg.n_categories = f.categories;
  cfg.d_feature = f.feature_dim;
  const Corpus corpus = generate_corpus(f.seed, cfg);
  write_corpus(f.out_dir, corpus, f.seed);
  std::cout << "wrote " << corpus.train.size() << " train, " << corpus.val.size() << " val, " << corpus.test.size()
            << " test scenes to " << f.out_dir << "\n";
}

// train ---------------------------------------------------------------------

struct TrainFlags {
  std::string data_dir = default_data_dir();
  std::string mode = "standard";
  std::string out;
  std::string log;
  std::uint64_t seed = 1;
  bool toy = false;
  ModelFlags model;
};

void cmd_train(const TrainFlags& f) {
  const EncoderMode mode = encoder_mode_from_string(f.mode);
  ModelConfig mc = f.toy ? toy_model_config() : ModelConfig{};
  TrainConfig tc = f.toy ? toy_train_config() : TrainConfig{};
  f.model.apply(mc, tc);
  tc.seed = f.seed;
  tc.validate();
  const Corpus corpus = load_corpus(f.data_dir);
  const Vocab vocab = build_vocab(corpus.captions, corpus.train);
  mc.mode = mode;
  mc.d_feature = corpus.config.d_feature;
  mc.vocab_size = vocab.size();
  mc.validate();
  ensure_parent(f.out);
  if (!f.log.empty()) ensure_parent(f.log);

  const Dataset ds = make_dataset(corpus, vocab, mc.max_caption_len);
  Trainer trainer(mc, init_params<float>(mc, f.seed), ds, tc);
  std::cerr << "training " << to_string(mode) << " on " << ds.train.size() << " pairs, vocab " << vocab.size() << "\n";
  while (!trainer.done()) {
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run_epoch();
    const auto& e = trainer.log().epochs.back();
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %zu  train %.4f  val %.4f%s  (%.1fs)\n", e.epoch + 1, e.train_loss,
                  e.val_loss, e.improved ? " *" : "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cerr << buf;
  }
  save_checkpoint(f.out, mc, vocab, trainer.best_params());
  if (!f.log.empty()) io::write_text(f.log, trainer.log().to_jsonl());
  char buf[200];
  std::snprintf(buf, sizeof(buf), "best val loss %.6f after %zu epochs%s\n", trainer.best_val_loss(),
                trainer.epochs_completed(), trainer.stopped_early() ? " (early stop)" : "");
  std::cout << buf;
}

// caption -------------------------------------------------------------------

struct CaptionFlags {
  std::string checkpoint, features, out;
  std::size_t beam = 5, max_len = 20;
};

void cmd_caption(const CaptionFlags& f) {
  require_file(f.checkpoint, "checkpoint");
  require_file(f.features, "feature file");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const auto records = read_features(f.features);
  const CaptionModel<float> model(ck.config, ck.params);
  const DecodeConfig dc = eval_decode_config(f.beam, f.max_len);
  dc.validate(ck.config.vocab_size);
  std::vector<CaptionRecord> out;
  for (const auto& r : records) {
    if (r.d != ck.config.d_feature) {
      throw DimensionError("'" + r.image_id + "' has " + std::to_string(r.d) + "-dim features, checkpoint expects " +
                           std::to_string(ck.config.d_feature));
    }
    const ImageInput img = to_image_input(r);
    out.push_back({r.image_id, {ck.vocab.decode(caption_image(model, img.features, img.boxes, dc))}});
  }
  emit(f.out, captions_to_jsonl(out));
}

// evaluate ------------------------------------------------------------------

struct EvalFlags {
  std::string candidates, references, scenes, compare, out;
  bool json = false;
  bool first_caption = false;
};

std::string render_report(const EvalReport& r) {
  std::string out;
  char buf[320];
  for (std::size_t n = 0; n < r.bleu.scores.size(); ++n) {
    std::snprintf(buf, sizeof(buf), "BLEU-%zu    %.4f\n", n + 1, r.bleu.scores[n]);
    out += buf;
  }
  if (!r.bleu.diagnostic.empty()) out += "note: " + r.bleu.diagnostic + "\n";
  std::snprintf(buf, sizeof(buf), "ROUGE-L   %.4f\nCIDEr-D   %.4f\n", r.rouge_l, r.cider_d);
  out += buf;
  if (r.spatial) {
    std::snprintf(buf, sizeof(buf), "relation  %.4f  (%zu scenes)\ncount     %.4f  (%zu scenes)\n",
                  r.spatial->relation_acc, r.spatial->relation_scenes, r.spatial->count_acc, r.spatial->count_scenes);
    out += buf;
  }
  auto flag = [](const std::optional<bool>& v) { return v ? (*v ? "yes" : "no") : "-"; };
  out += "\nimage_id      BLEU-4   ROUGE-L  CIDEr-D  rel  cnt  caption\n";
  for (const auto& s : r.images) {
    std::snprintf(buf, sizeof(buf), "%-12s  %.4f   %.4f   %7.4f  %-3s  %-3s  %s\n", s.image_id.c_str(), s.bleu4,
                  s.rouge_l, s.cider_d, flag(s.relation_correct), flag(s.count_correct), s.candidate.c_str());
    out += buf;
  }
  return out;
}

void cmd_evaluate(const EvalFlags& f) {
  require_file(f.candidates, "candidate file");
  require_file(f.references, "reference file");
  if (!f.scenes.empty()) require_file(f.scenes, "scene file");
  if (!f.compare.empty()) require_file(f.compare, "comparison candidate file");
  const auto refs = read_captions(f.references);
  std::vector<Scene> scenes;
  if (!f.scenes.empty()) scenes = read_scenes(f.scenes);
  const std::vector<Scene>* sp = f.scenes.empty() ? nullptr : &scenes;
  auto candidates = [&](const std::string& path) {
    auto recs = read_captions(path);
    if (f.first_caption) {
      for (auto& r : recs) {
        if (r.captions.size() > 1) r.captions.resize(1);
      }
    }
    return recs;
  };
  const EvalReport a = evaluate(candidates(f.candidates), refs, sp);

  Json j;
  j["A"] = to_json(a);
  std::string text = render_report(a);
  if (!f.compare.empty()) {
    const EvalReport b = evaluate(candidates(f.compare), refs, sp);
    const auto rows = compare(a, b);
    j["B"] = to_json(b);
    j["comparison"] = to_json(rows);
    text += "\nA = " + f.candidates + "\nB = " + f.compare + "\n" + render_comparison(rows);
    for (const auto& r : rows) {
      if (!r.test) text += "notice: " + r.metric + ": " + r.note + "\n";
    }
  }
  if (!f.out.empty()) emit(f.out, j.dump(2) + "\n");
  std::cout << (f.json ? j.dump(2) + "\n" : text);
}

// ablate --------------------------------------------------------------------

struct AblateFlags {
  std::string data_dir = default_data_dir();
  std::string out;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::string> variants;
  std::size_t jobs = 1, beam = 2, max_len = 20;
  ModelFlags model;
};

void cmd_ablate(const AblateFlags& f) {
  AblationConfig cfg;
  f.model.apply(cfg.model, cfg.train);
  cfg.seeds = f.seeds;
  cfg.jobs = f.jobs;
  cfg.decode = eval_decode_config(f.beam, f.max_len);
  if (!f.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : f.variants) cfg.variants.push_back(encoder_mode_from_string(v));
  }
  cfg.train.validate();
  if (!f.out.empty()) ensure_parent(f.out);
  const Corpus corpus = load_corpus(f.data_dir);
  cfg.model.d_feature = corpus.config.d_feature;
  std::cerr << "ablation: " << cfg.variants.size() << " variants x " << cfg.seeds.size() << " seeds\n";
  const auto rep = run_ablation(corpus, cfg, [](const AblationRun& r) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-13s seed %-3llu val %.4f  relation %.3f  count %.3f  (%zu epochs, %.0fs)\n",
                  to_string(r.mode).c_str(), static_cast<unsigned long long>(r.seed), r.val_loss,
                  r.eval.spatial->relation_acc, r.eval.spatial->count_acc, r.epochs_run, r.seconds);
    std::cerr << buf;
  });
  if (!f.out.empty()) emit(f.out, to_json(rep).dump(2) + "\n");
  std::cout << render_ablation(rep);
}

// export-attention ------------------------------------------------------------

struct ExportFlags {
  std::string checkpoint, features, image_id, out;
};

Json matrix_json(const Tensor<float>& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void cmd_export_attention(const ExportFlags& f) {
  require_file(f.checkpoint, "checkpoint");
  require_file(f.features, "feature file");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const auto records = read_features(f.features);
  if (records.empty()) throw FormatError(f.features + ": no feature records");
  const FeatureRecord* rec = &records.front();
  if (!f.image_id.empty()) {
    rec = nullptr;
    for (const auto& r : records) {
      if (r.image_id == f.image_id) rec = &r;
    }
    if (!rec) throw FormatError(f.features + ": no record for image '" + f.image_id + "'");
  }
  if (rec->d != ck.config.d_feature) {
    throw DimensionError("'" + rec->image_id + "' has " + std::to_string(rec->d) +
                         "-dim features, checkpoint expects " + std::to_string(ck.config.d_feature));
  }
  const CaptionModel<float> model(ck.config, ck.params);
  const ImageInput img = to_image_input(*rec);
  NoGradGuard ng;
  AttentionTrace<float> trace;
  ForwardOptions<float> opt;
  opt.trace = &trace;
  const auto enc = model.encode(img.features, img.boxes, opt);

  Json j;
  j["image_id"] = rec->image_id;
  j["mode"] = to_string(ck.config.mode);
  j["width"] = rec->width;
  j["height"] = rec->height;
  Json boxes = Json::array();
  for (const auto& b : enc.boxes) {
    boxes.push_back({{"x_center", b.x_center}, {"y_center", b.y_center}, {"w", b.w}, {"h", b.h}});
  }
  j["boxes"] = boxes;
  Json maps = Json::array();
  for (const auto& r : trace.records) {
    if (r.block != "encoder") continue;
    Json m;
    m["layer"] = r.layer;
    m["head"] = r.head;
    m["omega"] = matrix_json(r.weights);
    m["softmax_appearance"] = matrix_json(r.softmax_appearance);
    if (r.gate) m["omega_g"] = matrix_json(*r.gate);
    maps.push_back(std::move(m));
  }
  j["encoder"] = maps;
  emit(f.out, j.dump(1) + "\n");
}

// info ----------------------------------------------------------------------

void cmd_info(const std::string& path) {
  require_file(path, "checkpoint");
  const Checkpoint ck = load_checkpoint(path);
  std::cout << ck.config.canonical_text() << "vocab: " << ck.vocab.size() << " tokens\n";
  std::size_t total = 0;
  for (const auto& [name, t] : ck.params.named()) {
    std::cout << name << " " << shape_str(t.shape()) << "\n";
    total += t.size();
  }
  std::cout << "parameters: " << total << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-relation transformer captioner on synthetic scenes"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic corpus");
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--scenes", gen.scenes, "number of scenes");
  g->add_option("--out-dir", gen.out_dir, "output directory (default $ORT_DATA_DIR or ./data)");
  g->add_option("--categories", gen.categories, "object categories");
  g->add_option("--feature-dim", gen.feature_dim, "feature vector width");
  g->callback([&] { cmd_gen_data(gen); });

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "train a captioner and write the best-validation checkpoint");
  t->add_option("--data-dir", tr.data_dir, "corpus directory (default $ORT_DATA_DIR or ./data)");
  t->add_option("--mode", tr.mode, "standard|geometric|ordered:size|ordered:ltr|ordered:ttb");
  t->add_option("--seed", tr.seed, "initialization and shuffling seed");
  t->add_option("--out", tr.out, "checkpoint path")->required();
  t->add_option("--log", tr.log, "run log path (JSON lines)");
  t->add_flag("--toy", tr.toy, "small architecture and schedule for one CPU core");
  tr.model.add(t);
  t->callback([&] { cmd_train(tr); });

  CaptionFlags cap;
  auto* c = app.add_subcommand("caption", "caption every image of a feature file");
  c->add_option("--checkpoint", cap.checkpoint, "checkpoint path")->required();
  c->add_option("--features", cap.features, "feature file")->required();
  c->add_option("--beam", cap.beam, "beam size (1 = greedy)")->check(CLI::PositiveNumber);
  c->add_option("--max-len", cap.max_len, "maximum caption words")->check(CLI::PositiveNumber);
  c->add_option("--out", cap.out, "caption file (default stdout)");
  c->callback([&] { cmd_caption(cap); });

  EvalFlags ev;
  auto* e = app.add_subcommand("evaluate", "score candidate captions, optionally against a second system");
  e->add_option("--candidates", ev.candidates, "candidate caption file")->required();
  e->add_option("--references", ev.references, "reference caption file")->required();
  e->add_option("--scenes", ev.scenes, "scene layout file for relation and count accuracy");
  e->add_option("--compare", ev.compare, "second candidate file for paired t-tests");
  e->add_option("--out", ev.out, "JSON report path");
  e->add_flag("--json", ev.json, "print the JSON report instead of tables");
  e->add_flag("--first-caption", ev.first_caption, "score only the first caption of each candidate record");
  e->callback([&] { cmd_evaluate(ev); });

  AblateFlags ab;
  auto* a = app.add_subcommand("ablate", "train every encoder variant over several seeds (toy profile)");
  a->add_option("--data-dir", ab.data_dir, "corpus directory (default $ORT_DATA_DIR or ./data)");
  a->add_option("--seeds", ab.seeds, "seeds")->delimiter(',');
  a->add_option("--variants", ab.variants, "encoder variants (default all five)")->delimiter(',');
  a->add_option("--jobs", ab.jobs, "worker threads")->check(CLI::PositiveNumber);
  a->add_option("--beam", ab.beam, "beam size for scoring")->check(CLI::PositiveNumber);
  a->add_option("--max-len", ab.max_len, "maximum caption words when scoring")->check(CLI::PositiveNumber);
  a->add_option("--out", ab.out, "JSON report path");
  ab.model.add(a);
  a->callback([&] { cmd_ablate(ab); });

  ExportFlags ex;
  auto* x = app.add_subcommand("export-attention", "dump encoder attention maps of one image as JSON");
  x->add_option("--checkpoint", ex.checkpoint, "checkpoint path")->required();
  x->add_option("--features", ex.features, "feature file")->required();
  x->add_option("--image-id", ex.image_id, "image to export (default first record)");
  x->add_option("--out", ex.out, "output path (default stdout)");
  x->callback([&] { cmd_export_attention(ex); });

  std::string info_path;
  auto* i = app.add_subcommand("info", "print a checkpoint's configuration and tensors");
  i->add_option("--checkpoint", info_path, "checkpoint path")->required();
  i->callback([&] { cmd_info(info_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err);
  }
  return 0;
}
