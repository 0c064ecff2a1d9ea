#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "ort/ablation.hpp"
#include "ort/data/checkpoint.hpp"
#include "ort/data/corpus_files.hpp"

namespace fs = std::filesystem;
using namespace ort;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + ORTCAP_PATH + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) { return io::read_text(p.string()); }

const char* kTiny = "--toy --d-model 16 --heads 2 --layers 1 --d-ff 32 --warmup 50";

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("ortcap_cli_" + std::to_string(getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    ASSERT_EQ(run("gen-data --seed 3 --scenes 60 --out-dir " + (dir / "data").string()).code, 0);
    for (const char* mode : {"standard", "geometric"}) {
      const auto r = run(std::string("train ") + kTiny + " --epochs 2 --mode " + mode + " --data-dir " + (dir / "data").string() +
                         " --out " + (dir / (std::string(mode) + ".ortc")).string());
      ASSERT_EQ(r.code, 0) << mode;
    }
  }

  static void TearDownTestSuite() { fs::remove_all(dir); }

  static std::string data(const std::string& f) { return (dir / "data" / f).string(); }
  static std::string path(const std::string& f) { return (dir / f).string(); }
};

fs::path Cli::dir;

TEST_F(Cli, GenDataWritesSplitsAndManifest) {
  for (const auto& s : split_names()) {
    EXPECT_TRUE(fs::exists(data(s + ".ortf")));
    EXPECT_TRUE(fs::exists(data(s + ".captions.jsonl")));
    EXPECT_TRUE(fs::exists(data(s + ".scenes.jsonl")));
  }
  const Json m = Json::parse(slurp(data("manifest.json")));
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["splits"]["train"], 48);
  EXPECT_EQ(m["splits"]["val"], 6);
  EXPECT_EQ(m["splits"]["test"], 6);
}

TEST_F(Cli, GenDataRoundTripsTheGeneratedCorpus) {
  CorpusConfig cfg;
  cfg.n_scenes = 60;
  const Corpus want = generate_corpus(3, cfg);
  const Corpus got = read_corpus((dir / "data").string()).corpus;
  ASSERT_EQ(got.scenes.size(), want.scenes.size());
  std::vector<std::size_t> order = want.train;
  order.insert(order.end(), want.val.begin(), want.val.end());
  order.insert(order.end(), want.test.begin(), want.test.end());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& a = got.scenes[k];
    const auto& b = want.scenes[order[k]];
    EXPECT_EQ(a.image_id, b.image_id);
    EXPECT_EQ(a.features, b.features);
    ASSERT_EQ(a.objects.size(), b.objects.size());
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
      EXPECT_EQ(a.objects[i].box.x_center, b.objects[i].box.x_center);
      EXPECT_EQ(a.objects[i].box.h, b.objects[i].box.h);
    }
    EXPECT_EQ(got.captions[k].captions, want.captions[order[k]].captions);
  }
}

TEST_F(Cli, GenDataIsIdempotent) {
  const auto out = path("again");
  ASSERT_EQ(run("gen-data --seed 3 --scenes 60 --out-dir " + out).code, 0);
  for (const auto& e : fs::directory_iterator(dir / "data")) {
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(out) / e.path().filename())) << e.path().filename();
  }
}

TEST_F(Cli, GenDataRejectsTooFewScenes) { EXPECT_EQ(run("gen-data --scenes 5 --out-dir " + path("small")).code, 1); }

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("caption --beam 2").code, 1);
  EXPECT_EQ(run("train --mode diagonal --data-dir " + path("data") + " --out " + path("x.ortc")).code, 1);
  EXPECT_EQ(run("train --batch-size 0 --data-dir " + path("data") + " --out " + path("x.ortc")).code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(run("train --data-dir " + path("nowhere") + " --out " + path("x.ortc")).code, 2);
  EXPECT_EQ(run("caption --checkpoint " + path("missing.ortc") + " --features " + data("val.ortf")).code, 2);
  io::write_text(path("bad.ortc"), "ORTC garbage");
  EXPECT_EQ(run("caption --checkpoint " + path("bad.ortc") + " --features " + data("val.ortf")).code, 2);
  ASSERT_EQ(run("gen-data --scenes 10 --feature-dim 16 --out-dir " + path("narrow")).code, 0);
  EXPECT_EQ(run("caption --checkpoint " + path("standard.ortc") + " --features " + path("narrow/val.ortf")).code, 2);
}

TEST_F(Cli, DataDirDefaultsFromEnvironment) {
  const auto r = run(std::string("train ") + kTiny + " --epochs 1 --out " + path("env.ortc"), "ORT_DATA_DIR=" + path("data"));
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(path("env.ortc")));
}

TEST_F(Cli, GeometricCheckpointListsPerHeadGateWeights) {
  const auto g = run("info --checkpoint " + path("geometric.ortc"));
  const auto s = run("info --checkpoint " + path("standard.ortc"));
  ASSERT_EQ(g.code, 0);
  ASSERT_EQ(s.code, 0);
  EXPECT_NE(g.out.find("enc.0.attn.W_G.0 [64x1]"), std::string::npos);
  EXPECT_NE(g.out.find("enc.0.attn.W_G.1 [64x1]"), std::string::npos);
  EXPECT_EQ(s.out.find("W_G"), std::string::npos);
  EXPECT_NE(g.out.find("mode=geometric"), std::string::npos);
}

TEST_F(Cli, TrainDefaultsToBatchOfTen) {
  ASSERT_EQ(run(std::string("train ") + kTiny + " --epochs 1 --data-dir " + path("data") + " --out " + path("b.ortc") +
                " --log " + path("b.jsonl"))
                .code,
            0);
  const RunLog log = RunLog::from_jsonl(slurp(path("b.jsonl")));
  ASSERT_FALSE(log.steps.empty());
  for (std::size_t i = 0; i + 1 < log.steps.size(); ++i) EXPECT_EQ(log.steps[i].pairs, 10u);
}

TEST_F(Cli, BeamOneEqualsGreedyPath) {
  ASSERT_EQ(run("caption --beam 1 --checkpoint " + path("geometric.ortc") + " --features " + data("val.ortf") +
                " --out " + path("beam1.jsonl"))
                .code,
            0);
  const auto got = read_captions(path("beam1.jsonl"));
  const Checkpoint ck = load_checkpoint(path("geometric.ortc"));
  const CaptionModel<float> model(ck.config, ck.params);
  const auto recs = read_features(data("val.ortf"));
  ASSERT_EQ(got.size(), recs.size());
  const DecodeConfig dc = eval_decode_config(1, 20);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto img = to_image_input(recs[i]);
    NoGradGuard ng;
    ForwardOptions<float> opt;
    const auto enc = model.encode(img.features, img.boxes, opt);
    DecodeConfig capped = dc;
    capped.max_len = std::min(dc.max_len, ck.config.max_caption_len);
    const auto words = greedy_decode(model_scorer(model, enc), ck.config.vocab_size, capped).words(capped.eos_id);
    EXPECT_EQ(got[i].captions.front(), ck.vocab.decode(words));
  }
}

TEST_F(Cli, CaptionIsDeterministicAndSupportsBeamFive) {
  const std::string base = "caption --beam 5 --checkpoint " + path("standard.ortc") + " --features " + data("val.ortf");
  const auto a = run(base);
  const auto b = run(base);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(captions_from_jsonl(a.out, "stdout").size(), 6u);
}

TEST_F(Cli, ReferencesAgainstThemselvesScorePerfectly) {
  const auto r = run("evaluate --json --first-caption --candidates " + data("val.captions.jsonl") + " --references " +
                     data("val.captions.jsonl") + " --scenes " + data("val.scenes.jsonl"));
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["A"]["corpus"]["BLEU-4"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["A"]["corpus"]["relation_acc"].get<double>(), 1.0);
  EXPECT_EQ(j["A"]["per_image"].size(), 6u);
}

TEST_F(Cli, IdenticalSystemsGiveDegenerateVarianceNotice) {
  ASSERT_EQ(run("caption --beam 2 --checkpoint " + path("standard.ortc") + " --features " + data("val.ortf") +
                " --out " + path("same.jsonl"))
                .code,
            0);
  const std::string args = "evaluate --candidates " + path("same.jsonl") + " --compare " + path("same.jsonl") +
                           " --references " + data("val.captions.jsonl") + " --scenes " + data("val.scenes.jsonl");
  const auto text = run(args);
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("notice: BLEU-4: degenerate variance"), std::string::npos);
  const Json j = Json::parse(run(args + " --json").out);
  for (const auto& row : j["comparison"]) {
    EXPECT_TRUE(row["p_two_tailed"].is_null());
    EXPECT_FALSE(row["significant"].get<bool>());
  }
}

TEST_F(Cli, SignificantDifferencesAreStarred) {
  ASSERT_EQ(run("gen-data --seed 5 --scenes 200 --out-dir " + path("big")).code, 0);
  const auto refs = read_captions(path("big/train.captions.jsonl"));
  std::vector<CaptionRecord> good, mixed;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    good.push_back({refs[i].image_id, {refs[i].captions.front()}});
    mixed.push_back({refs[i].image_id, {i % 3 == 0 ? refs[i].captions.front() : "a ball"}});
  }
  write_captions(path("good.jsonl"), good);
  write_captions(path("mixed.jsonl"), mixed);
  const auto r = run("evaluate --candidates " + path("good.jsonl") + " --compare " + path("mixed.jsonl") +
                     " --references " + path("big/train.captions.jsonl") + " --scenes " +
                     path("big/train.scenes.jsonl"));
  ASSERT_EQ(r.code, 0);
  const auto row = r.out.substr(r.out.find("\nRelation"));
  const auto line = row.substr(1, row.find('\n', 1) - 1);
  EXPECT_EQ(line.substr(line.size() - 2), " *") << line;
  EXPECT_NE(r.out.find("significant at alpha=0.05"), std::string::npos);
}

TEST_F(Cli, ExportedAttentionRowsAreStochastic) {
  for (const char* mode : {"standard", "geometric"}) {
    const auto r = run("export-attention --checkpoint " + path(std::string(mode) + ".ortc") + " --features " +
                       data("train.ortf"));
    ASSERT_EQ(r.code, 0);
    const Json j = Json::parse(r.out);
    ASSERT_EQ(j["encoder"].size(), 2u);  // 1 layer x 2 heads
    for (const auto& m : j["encoder"]) {
      for (const auto& row : m["omega"]) {
        double s = 0.0;
        for (double v : row) s += v;
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
      EXPECT_EQ(m.contains("omega_g"), std::string(mode) == "geometric");
      EXPECT_TRUE(m.contains("softmax_appearance"));
    }
  }
}

TEST_F(Cli, ExportMatchesInMemoryMatricesBitForBit) {
  const auto recs = read_features(data("train.ortf"));
  const FeatureRecord* three = nullptr;
  for (const auto& r : recs) {
    if (r.n == 3) three = &r;
  }
  ASSERT_NE(three, nullptr);
  const auto r = run("export-attention --checkpoint " + path("geometric.ortc") + " --features " + data("train.ortf") +
                     " --image-id " + three->image_id);
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);

  const Checkpoint ck = load_checkpoint(path("geometric.ortc"));
  const CaptionModel<float> model(ck.config, ck.params);
  const auto img = to_image_input(*three);
  NoGradGuard ng;
  AttentionTrace<float> trace;
  ForwardOptions<float> opt;
  opt.trace = &trace;
  (void)model.encode(img.features, img.boxes, opt);
  std::size_t k = 0;
  for (const auto& rec : trace.records) {
    if (rec.block != "encoder") continue;
    const Json& m = j["encoder"][k++];
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_EQ(m["omega"][a][b].get<float>(), rec.weights.at(a, b));
        EXPECT_EQ(m["softmax_appearance"][a][b].get<float>(), rec.softmax_appearance.at(a, b));
        EXPECT_EQ(m["omega_g"][a][b].get<float>(), rec.gate->at(a, b));
      }
    }
  }
  EXPECT_EQ(k, j["encoder"].size());
  EXPECT_EQ(j["boxes"].size(), 3u);
}

TEST_F(Cli, AblationReportHasFiveVariantRows) {
  const auto r = run(std::string("ablate --d-model 16 --heads 2 --layers 1 --d-ff 32 --epochs 1 --warmup 50 --seeds 1,2 ") +
                     "--data-dir " + path("data") + " --out " + path("ablation.json"));
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(slurp(path("ablation.json")));
  ASSERT_EQ(j["variants"].size(), 5u);
  const std::vector<std::string> names = {"standard", "ordered:size", "ordered:ltr", "ordered:ttb", "geometric"};
  for (std::size_t v = 0; v < 5; ++v) {
    const auto& row = j["variants"][v];
    EXPECT_EQ(row["variant"], names[v]);
    EXPECT_EQ(row["per_seed"].size(), 2u);
    for (const char* key : {"val_loss", "relation_acc", "count_acc"}) {
      EXPECT_TRUE(row[key].contains("mean"));
      EXPECT_TRUE(row[key].contains("sd"));
    }
  }
  EXPECT_EQ(j["relation_t_tests"].size(), 8u);
  std::size_t lines = 0;
  for (char c : r.out) lines += c == '\n';
  EXPECT_EQ(lines, 6u);  // header plus one row per variant
}

}  // namespace
