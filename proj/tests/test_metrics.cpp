#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ort/data/corpus.hpp"
#include "ort/evaluation.hpp"

using namespace ort;

namespace {

Tokens T(const std::string& s) { return tokenize(s); }

std::vector<Tokens> R(std::initializer_list<const char*> refs) {
  std::vector<Tokens> out;
  for (const char* r : refs) out.push_back(T(r));
  return out;
}

SceneObject obj(const std::string& noun, double x, double y, double size = 40.0) {
  const auto& names = category_names();
  const int c = static_cast<int>(std::find(names.begin(), names.end(), noun) - names.begin());
  return {c, {x, y, size, size}};
}

Scene scene(std::string id, std::vector<SceneObject> objects) {
  Scene s;
  s.image_id = std::move(id);
  s.width = s.height = 400;
  s.objects = std::move(objects);
  return s;
}

}  // namespace

TEST(Bleu, SelfEvaluationIsOne) {
  const std::vector<Tokens> c = {T("a cat to the left of a dog"), T("two cups and a ball")};
  const auto r = bleu(c, {{c[0]}, {c[1]}});
  for (double s : r.scores) EXPECT_DOUBLE_EQ(s, 1.0);
  EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, ClipsRepeatedUnigrams) {
  const auto r = bleu({T("a a a")}, {{T("a b")}});
  EXPECT_NEAR(r.precisions[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.scores[0], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(r.scores[3], 0.0);
}

TEST(Bleu, CorpusAggregationMatchesCountOracle) {
  const auto r = bleu({T("a cat on the mat"), T("the dog runs in the park")},
                      {R({"a cat sits on a mat", "the cat is on the mat"}), R({"a dog runs in the park"})});
  const double want_p[] = {10.0 / 11.0, 7.0 / 9.0, 4.0 / 7.0, 2.0 / 5.0};
  const double want[] = {0.8300915602566021, 0.767803533011983, 0.6750360224668658, 0.5789484299135018};
  for (int n = 0; n < 4; ++n) {
    EXPECT_NEAR(r.precisions[n], want_p[n], 1e-12);
    EXPECT_NEAR(r.scores[n], want[n], 1e-12);
  }
  EXPECT_NEAR(r.brevity_penalty, 0.9131007162822624, 1e-12);
}

TEST(Bleu, EmptyCorpusGivesZeroWithDiagnostic) {
  const auto r = bleu({}, {});
  EXPECT_EQ(r.scores[3], 0.0);
  EXPECT_FALSE(r.diagnostic.empty());
  EXPECT_THROW(bleu({T("a")}, {{}}), UsageError);
  EXPECT_THROW(bleu({T("a")}, {}), DimensionError);
}

TEST(Bleu, SmoothedSentenceScoresMatchCountOracle) {
  struct Case {
    const char* cand;
    std::vector<Tokens> refs;
    double want;
  };
  const std::vector<Case> cases = {
      {"a cat on the mat", R({"a cat sits on a mat", "the cat is on the mat"}), 0.49473859088183875},
      {"the the the the", R({"the cat is on the mat"}), 0.2304318198457308},
      {"a dog", R({"a dog runs in the park"}), 0.1353352832366127},
      {"a dog runs in the park", R({"a dog runs in the park"}), 1.0},
      {"cat", R({"a cat"}), 0.36787944117144233},
      {"two birds on a wire today", R({"two birds on a wire", "birds sit on the wire"}), 0.8034284189446518},
      {"x y z", R({"a b c"}), 0.0},
      {"a b a b a b", R({"a b", "b a b a"}), 0.6042750794713536},
      {"there is a cup above a lamp", R({"a cup above a lamp", "there is a lamp below a cup"}), 0.8408964152537145},
      {"a ball and two cats", R({"two cats and a ball", "a ball and two cats"}), 1.0}};
  for (const auto& c : cases) EXPECT_NEAR(bleu_smoothed(T(c.cand), c.refs), c.want, 1e-12) << c.cand;
  EXPECT_EQ(bleu_smoothed({}, R({"a"})), 0.0);
}

TEST(RougeL, HandCases) {
  EXPECT_DOUBLE_EQ(rouge_l(T("a cat on a mat"), R({"a cat on a mat"})), 1.0);
  EXPECT_NEAR(rouge_l(T("a b c"), R({"a c"})), 0.8299319727891156, 1e-15);
  EXPECT_EQ(rouge_l(T("x y"), R({"a b", "c"})), 0.0);
  EXPECT_EQ(rouge_l({}, R({"a b"})), 0.0);
  EXPECT_EQ(lcs_length(T("a b c b d a b"), T("b d c a b a")), 4u);
}

TEST(CiderD, MatchesVectorOracle) {
  const auto r = cider_d({T("a cat on the mat"), T("the dog runs"), T("a bird on a wire")},
                         {R({"a cat sits on a mat", "the cat is on the mat"}), R({"a dog runs in the park"}),
                          R({"two birds on a wire", "birds sit on the wire"})});
  ASSERT_EQ(r.per_image.size(), 3u);
  EXPECT_NEAR(r.per_image[0], 3.537136230358111, 1e-12);
  EXPECT_NEAR(r.per_image[1], 2.5467103925403114, 1e-12);
  EXPECT_NEAR(r.per_image[2], 2.978827075033986, 1e-12);
  EXPECT_NEAR(r.score, 3.0208912326441357, 1e-12);
}

TEST(CiderD, CandidateEqualToSoleReference) {
  // "a" occurs in both reference sets, so it carries zero idf weight; the
  // two-word caption has no 3- or 4-grams.
  const auto r = cider_d({T("a cat on the mat"), T("a dog")}, {R({"a cat on the mat"}), R({"a dog"})});
  EXPECT_NEAR(r.per_image[0], 10.0, 1e-12);
  EXPECT_NEAR(r.per_image[1], 5.0, 1e-12);
}

TEST(CiderD, UnseenNgramsContributeNothing) {
  const std::vector<std::vector<Tokens>> refs = {R({"a cat on the mat"}), R({"a dog in the park"})};
  const auto r = cider_d({T("zebra xylophone"), T("a dog in the park")}, refs);
  EXPECT_EQ(r.per_image[0], 0.0);
  const auto with_noise = cider_d({T("a cat zebra"), T("a dog in the park")}, refs);
  EXPECT_GT(with_noise.per_image[0], 0.0);
  for (double v : with_noise.per_image) EXPECT_GE(v, 0.0);
}

TEST(CiderD, SingleImageCorpusIsDegenerate) {
  EXPECT_THROW(cider_d({T("a cat")}, {R({"a cat"})}), NumericError);
}

TEST(Metrics, InvariantToImageAndReferenceOrder) {
  const auto corpus = generate_corpus(3, [] {
    CorpusConfig c;
    c.n_scenes = 40;
    return c;
  }());
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  for (std::size_t i = 0; i < corpus.scenes.size(); ++i) {
    cands.push_back(T(corpus.captions[(i + 1) % corpus.scenes.size()].captions[0]));
    std::vector<Tokens> r;
    for (const auto& c : corpus.captions[i].captions) r.push_back(T(c));
    refs.push_back(std::move(r));
  }
  const auto b = bleu(cands, refs);
  const auto c = cider_d(cands, refs);
  Rng rng(4);
  std::vector<std::size_t> perm(cands.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<Tokens> pc;
  std::vector<std::vector<Tokens>> pr;
  for (auto i : perm) {
    pc.push_back(cands[i]);
    auto r = refs[i];
    std::reverse(r.begin(), r.end());
    pr.push_back(std::move(r));
  }
  const auto pb = bleu(pc, pr);
  const auto pcd = cider_d(pc, pr);
  for (int n = 0; n < 4; ++n) EXPECT_DOUBLE_EQ(pb.scores[n], b.scores[n]);
  EXPECT_NEAR(pcd.score, c.score, 1e-12);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    EXPECT_NEAR(pcd.per_image[k], c.per_image[perm[k]], 1e-12);
    EXPECT_DOUBLE_EQ(rouge_l(pc[k], pr[k]), rouge_l(cands[perm[k]], refs[perm[k]]));
    EXPECT_DOUBLE_EQ(bleu_smoothed(pc[k], pr[k]), bleu_smoothed(cands[perm[k]], refs[perm[k]]));
  }
  for (double v : c.per_image) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 10.0 + 1e-12);
  }
  for (double v : b.scores) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(ParseCaption, RelationsAndCounts) {
  const auto p = parse_caption("A cat is to the right of a dog.");
  ASSERT_TRUE(p.relation);
  EXPECT_EQ(p.relation->relation, Relation::right_of);
  EXPECT_EQ(category_names()[p.relation->subject], "cat");
  EXPECT_EQ(category_names()[p.relation->reference], "dog");
  const auto q = parse_caption("there are two trees and a cup");
  EXPECT_FALSE(q.relation);
  EXPECT_EQ(q.counts.size(), 2u);
  EXPECT_FALSE(parse_caption("a cat above a dog below a cup").relation);
  EXPECT_TRUE(parse_caption("two cats and three cats").count_conflict);
  EXPECT_FALSE(parse_caption("next to").relation);
}

TEST(SpatialAccuracy, MatchesHandTally) {
  const Scene horizontal = scene("h", {obj("cat", 50, 100), obj("dog", 250, 100)});
  const Scene vertical = scene("v", {obj("bird", 100, 50), obj("car", 100, 250)});
  const Scene close = scene("c", {obj("cup", 100, 100), obj("ball", 130, 100)});
  const Scene single = scene("s", {obj("lamp", 200, 200)});
  const Scene cats = scene("k1", {obj("cat", 50, 50), obj("cat", 150, 50), obj("dog", 300, 300)});
  const Scene trees = scene("k2", {obj("tree", 50, 50), obj("tree", 150, 50), obj("tree", 250, 50),
                                   obj("cup", 300, 300)});
  const Scene pairs = scene("k3", {obj("ball", 50, 50), obj("ball", 150, 50), obj("cat", 250, 250),
                                   obj("cat", 350, 350)});
  const std::vector<Scene> scenes = {horizontal, horizontal, horizontal, vertical, vertical,
                                     close,      single,     cats,       trees,    pairs};
  const std::vector<std::string> captions = {
      "a cat to the left of a dog",   // correct
      "a cat to the right of a dog",  // wrong direction
      "a dog to the right of a cat",  // correct, inverse phrasing
      "there is a bird above a car",  // correct
      "a car above a bird",           // wrong direction
      "a cup next to a ball",         // correct
      "a lamp",                       // no spatial truth
      "two cats and a dog",           // correct
      "two trees and a cup",          // wrong count
      "two balls and a cat"};         // contradicts two cats
  const auto acc = spatial_accuracy(captions, scenes);
  EXPECT_EQ(acc.relation_scenes, 6u);
  EXPECT_EQ(acc.count_scenes, 3u);
  EXPECT_DOUBLE_EQ(acc.relation_acc, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(acc.count_acc, 1.0 / 3.0);
  EXPECT_FALSE(acc.relation_correct[6].has_value());
  EXPECT_FALSE(acc.count_correct[6].has_value());
  EXPECT_FALSE(*spatial_accuracy({"a cup and a ball"}, {close}).relation_correct[0]);
  EXPECT_THROW(spatial_accuracy({"a"}, {}), DimensionError);
}

TEST(SpatialAccuracy, ReferencesAreCorrectOnGeneratedCorpus) {
  CorpusConfig cfg;
  cfg.n_scenes = 300;
  const auto c = generate_corpus(12, cfg);
  std::vector<std::string> first;
  for (const auto& r : c.captions) first.push_back(r.captions.front());
  const auto acc = spatial_accuracy(first, c.scenes);
  EXPECT_GT(acc.relation_scenes, 50u);
  EXPECT_GT(acc.count_scenes, 30u);
  EXPECT_DOUBLE_EQ(acc.relation_acc, 1.0);
  EXPECT_DOUBLE_EQ(acc.count_acc, 1.0);
}

TEST(PairedTTest, HandExample) {
  const auto r = paired_t_test({1, 0, 1, 0, 1}, {0, 1, 0, 1, 0});
  EXPECT_NEAR(r.t, 0.408248290463863, 1e-12);
  EXPECT_EQ(r.dof, 4u);
  EXPECT_NEAR(r.p_two_tailed, 0.704, 1e-9);
  EXPECT_DOUBLE_EQ(r.mean_difference, 0.2);
  EXPECT_FALSE(r.significant());
}

TEST(PairedTTest, AntisymmetricWithEqualP) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = rng.uniform();
    for (auto& x : b) x = rng.uniform();
    const auto ab = paired_t_test(a, b), ba = paired_t_test(b, a);
    EXPECT_DOUBLE_EQ(ab.t, -ba.t);
    EXPECT_DOUBLE_EQ(ab.p_two_tailed, ba.p_two_tailed);
    EXPECT_GE(ab.p_two_tailed, 0.0);
    EXPECT_LE(ab.p_two_tailed, 1.0);
  }
}

TEST(PairedTTest, DegenerateAndInvalidInputs) {
  const std::vector<double> a = {0.1, 0.5, 0.9};
  EXPECT_THROW(paired_t_test(a, a), NumericError);
  EXPECT_THROW(paired_t_test({1, 2, 3}, {0, 1, 2}), NumericError);
  EXPECT_THROW(paired_t_test({1}, {0}), UsageError);
  EXPECT_THROW(paired_t_test({1, 2}, {0}), DimensionError);
}

TEST(PairedTTest, SignificanceUsesAlphaFiveHundredths) {
  EXPECT_EQ(kSignificanceAlpha, 0.05);
  // Two-tailed critical value for 10 dof is 2.228138851986.
  EXPECT_NEAR(student_t_two_tailed_p(2.228138851986, 10), 0.05, 1e-10);
  TTestResult r;
  r.p_two_tailed = 0.0499;
  EXPECT_TRUE(r.significant());
  r.p_two_tailed = 0.05;
  EXPECT_FALSE(r.significant());
}

TEST(Evaluate, ReferencesAgainstThemselves) {
  CorpusConfig cfg;
  cfg.n_scenes = 60;
  const auto c = generate_corpus(21, cfg);
  std::vector<CaptionRecord> cands;
  for (const auto& r : c.captions) cands.push_back({r.image_id, {r.captions.front()}});
  const auto rep = evaluate(cands, c.captions, &c.scenes);
  EXPECT_DOUBLE_EQ(rep.bleu.scores[3], 1.0);
  ASSERT_TRUE(rep.spatial);
  EXPECT_DOUBLE_EQ(rep.spatial->relation_acc, 1.0);
  EXPECT_EQ(rep.images.size(), c.scenes.size());
  const auto j = to_json(rep);
  EXPECT_DOUBLE_EQ(j["corpus"]["BLEU-4"].get<double>(), 1.0);
  EXPECT_EQ(j["per_image"].size(), c.scenes.size());
}

TEST(Evaluate, AlignmentErrors) {
  const std::vector<CaptionRecord> refs = {{"a", {"a cat"}}, {"b", {"a dog"}}};
  EXPECT_THROW(evaluate({{"z", {"a cat"}}}, refs), FormatError);
  EXPECT_THROW(evaluate({{"a", {"a cat", "a dog"}}}, refs), FormatError);
  const std::vector<Scene> none;
  EXPECT_THROW(evaluate({{"a", {"a cat"}}, {"b", {"a dog"}}}, refs, &none), FormatError);
}

TEST(Compare, MarksSignificantRowsAndDegenerateVariance) {
  std::vector<CaptionRecord> refs, good, bad;
  for (int i = 0; i < 30; ++i) {
    const std::string id = "img" + std::to_string(i);
    const std::string noun = category_names()[static_cast<std::size_t>(i % 8)];
    refs.push_back({id, {"a " + noun + " next to a lamp", "there is a " + noun + " next to a lamp"}});
    good.push_back({id, {i % 5 ? "a " + noun + " next to a lamp" : "a " + noun}});
    bad.push_back({id, {i % 7 ? "a boat" : "a " + noun + " next to a lamp"}});
  }
  const auto a = evaluate(good, refs), b = evaluate(bad, refs);
  const auto rows = compare(a, b);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].metric, "BLEU-4");
  ASSERT_TRUE(rows[0].test);
  EXPECT_TRUE(rows[0].test->significant());
  EXPECT_FALSE(rows[3].test);  // no scenes, so no relation scores
  const auto text = render_comparison(rows);
  EXPECT_NE(text.find(" *\n"), std::string::npos);
  EXPECT_NE(text.find("alpha=0.05"), std::string::npos);

  const auto same = compare(a, a);
  for (const auto& r : same) {
    EXPECT_FALSE(r.test);
    EXPECT_FALSE(r.note.empty());
  }
  EXPECT_NE(same[0].note.find("degenerate variance"), std::string::npos);
  EXPECT_EQ(render_comparison(same).find(" *\n"), std::string::npos);
  const auto j = to_json(same);
  EXPECT_TRUE(j[0]["p_two_tailed"].is_null());
}
