#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ort/data/scene.hpp"
#include "ort/errors.hpp"
#include "ort/numerics/rng.hpp"

namespace ort {

struct CorpusConfig {
  std::size_t n_scenes = 2000;
  std::size_t n_categories = 8;
  std::size_t d_feature = 32;
  double noise_sigma = 0.1;
  double image_width = 400.0;
  double image_height = 400.0;
  double min_box = 30.0;
  double max_box = 60.0;
  std::size_t captions_per_scene = 5;
  std::size_t max_objects = 6;  // upper bound of the scene contract; the generator uses at most 4
  // Scene kind mixture; the remainder are count scenes.
  double p_single = 0.15;
  double p_relation = 0.50;

  void validate() const {
    if (n_scenes < 10) {
      throw ConfigError("need at least 10 scenes for an 80/10/10 split, got " + std::to_string(n_scenes));
    }
    if (n_categories < 3 || n_categories > category_names().size()) {
      throw ConfigError("n_categories must be in [3, " + std::to_string(category_names().size()) + "]");
    }
    if (d_feature < n_categories) throw ConfigError("d_feature must be >= n_categories");
    if (max_objects < 4) throw ConfigError("max_objects must be >= 4");
    if (!(min_box > 0.0 && max_box >= min_box)) throw ConfigError("invalid box size range");
    if (!(p_single >= 0 && p_relation >= 0 && p_single + p_relation <= 1.0)) {
      throw ConfigError("scene kind probabilities must be non-negative and sum to <= 1");
    }
    if (captions_per_scene == 0) throw ConfigError("captions_per_scene must be >= 1");
  }
};

struct Corpus {
  CorpusConfig config;
  std::vector<Scene> scenes;
  std::vector<CaptionRecord> captions;  // aligned with scenes
  std::vector<std::size_t> train, val, test;  // indices into scenes
};

namespace detail {

inline std::string count_phrase(int count, const std::string& noun) {
  switch (count) {
    case 1: return "a " + noun;
    case 2: return "two " + plural(noun);
    case 3: return "three " + plural(noun);
    default: return std::to_string(count) + " " + plural(noun);
  }
}

inline bool inside(const BoundingBox& b, double w, double h) {
  return b.x_center - b.w / 2 >= 0 && b.x_center + b.w / 2 <= w && b.y_center - b.h / 2 >= 0 &&
         b.y_center + b.h / 2 <= h;
}

inline BoundingBox random_box(Rng& rng, const CorpusConfig& cfg) {
  BoundingBox b;
  b.w = rng.uniform(cfg.min_box, cfg.max_box);
  b.h = rng.uniform(cfg.min_box, cfg.max_box);
  b.x_center = rng.uniform(b.w / 2, cfg.image_width - b.w / 2);
  b.y_center = rng.uniform(b.h / 2, cfg.image_height - b.h / 2);
  return b;
}

/// Two boxes whose classified relation (first w.r.t. second) equals `rel`,
/// with a clear margin from every decision boundary.
inline std::array<BoundingBox, 2> place_pair(Relation rel, Rng& rng, const CorpusConfig& cfg) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    BoundingBox a = random_box(rng, cfg);
    BoundingBox b;
    b.w = rng.uniform(cfg.min_box, cfg.max_box);
    b.h = rng.uniform(cfg.min_box, cfg.max_box);
    const double sx = (a.w + b.w) / 2, sy = (a.h + b.h) / 2;
    const double far = rng.uniform(2.5, 4.5);
    const double near = rng.uniform(1.05, 1.35);
    const double jitter = rng.uniform(-0.3, 0.3);
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    switch (rel) {
      case Relation::left_of: b.x_center = a.x_center + far * sx; b.y_center = a.y_center + jitter * sy; break;
      case Relation::right_of: b.x_center = a.x_center - far * sx; b.y_center = a.y_center + jitter * sy; break;
      case Relation::above: b.y_center = a.y_center + far * sy; b.x_center = a.x_center + jitter * sx; break;
      case Relation::below: b.y_center = a.y_center - far * sy; b.x_center = a.x_center + jitter * sx; break;
      case Relation::next_to:
        b.x_center = a.x_center + side * near * sx;
        b.y_center = a.y_center + jitter * sy;
        break;
    }
    if (inside(b, cfg.image_width, cfg.image_height) && classify_relation(a, b) == rel) return {a, b};
  }
  throw ConfigError("could not place a box pair; image too small for the configured box sizes");
}

/// Boxes with no two objects crowding each other (some axis separated by at
/// least 1.2 half-extents).
inline std::vector<BoundingBox> place_scattered(std::size_t n, Rng& rng, const CorpusConfig& cfg) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<BoundingBox> boxes;
    for (std::size_t i = 0; i < n; ++i) boxes.push_back(random_box(rng, cfg));
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      for (std::size_t j = i + 1; j < n && ok; ++j) {
        const double rx = std::abs(boxes[i].x_center - boxes[j].x_center) / ((boxes[i].w + boxes[j].w) / 2);
        const double ry = std::abs(boxes[i].y_center - boxes[j].y_center) / ((boxes[i].h + boxes[j].h) / 2);
        ok = std::max(rx, ry) >= 1.2;
      }
    }
    if (ok) return boxes;
  }
  throw ConfigError("could not scatter boxes; image too small for the configured box sizes");
}

inline std::vector<int> distinct_categories(std::size_t k, Rng& rng, std::size_t n_categories) {
  std::vector<int> all(n_categories);
  for (std::size_t i = 0; i < n_categories; ++i) all[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(all));
  all.resize(k);
  return all;
}

inline std::vector<std::string> relation_captions(const std::string& a, const std::string& b, Relation rel,
                                                  std::size_t n, Rng& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool flip = rng.uniform() < 0.5;
    const std::string& x = flip ? b : a;
    const std::string& y = flip ? a : b;
    const std::string phrase = relation_phrase(flip ? inverse(rel) : rel);
    switch (rng.below(3)) {
      case 0: out.push_back("a " + x + " " + phrase + " a " + y); break;
      case 1: out.push_back("there is a " + x + " " + phrase + " a " + y); break;
      default: out.push_back("a " + x + " is " + phrase + " a " + y); break;
    }
  }
  return out;
}

inline std::vector<std::string> count_captions(std::vector<std::pair<int, std::string>> groups, std::size_t n,
                                               Rng& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    rng.shuffle(std::span<std::pair<int, std::string>>(groups));
    std::string body;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (g) body += " and ";
      body += count_phrase(groups[g].first, groups[g].second);
    }
    out.push_back(rng.uniform() < 0.5 ? body : "there are " + body);
  }
  return out;
}

}  // namespace detail

/// Seeded synthetic scene/caption corpus. Features carry only category
/// identity (one-hot plus Gaussian noise); any spatial language has to be
/// inferred from the boxes.
inline Corpus generate_corpus(std::uint64_t seed, const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  const auto& names = category_names();
  const Rng root(seed);
  for (std::size_t s = 0; s < cfg.n_scenes; ++s) {
    Rng rng = root.split(s);
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%06zu", s);
    scene.image_id = id;
    scene.width = cfg.image_width;
    scene.height = cfg.image_height;
    scene.d_feature = cfg.d_feature;
    std::vector<std::string> caps;

    const double kind = rng.uniform();
    if (kind < cfg.p_single) {
      const int c = static_cast<int>(rng.below(cfg.n_categories));
      scene.objects.push_back({c, detail::random_box(rng, cfg)});
      for (std::size_t i = 0; i < cfg.captions_per_scene; ++i) {
        caps.push_back(rng.uniform() < 0.5 ? "a " + names[c] : "there is a " + names[c]);
      }
    } else if (kind < cfg.p_single + cfg.p_relation) {
      const auto cats = detail::distinct_categories(2, rng, cfg.n_categories);
      const auto rel = static_cast<Relation>(rng.below(kRelationCount));
      const auto boxes = detail::place_pair(rel, rng, cfg);
      std::vector<SceneObject> objs{{cats[0], boxes[0]}, {cats[1], boxes[1]}};
      if (rng.uniform() < 0.5) std::swap(objs[0], objs[1]);
      scene.objects = objs;
      caps = detail::relation_captions(names[cats[0]], names[cats[1]], rel, cfg.captions_per_scene, rng);
    } else {
      static const std::vector<std::vector<int>> layouts = {{2, 1}, {3, 1}, {2, 2}, {2, 1, 1}};
      const auto& layout = layouts[rng.below(layouts.size())];
      const auto cats = detail::distinct_categories(layout.size(), rng, cfg.n_categories);
      std::size_t total = 0;
      for (int k : layout) total += static_cast<std::size_t>(k);
      const auto boxes = detail::place_scattered(total, rng, cfg);
      std::vector<int> labels;
      std::vector<std::pair<int, std::string>> groups;
      for (std::size_t g = 0; g < layout.size(); ++g) {
        for (int k = 0; k < layout[g]; ++k) labels.push_back(cats[g]);
        groups.emplace_back(layout[g], names[cats[g]]);
      }
      rng.shuffle(std::span<int>(labels));
      for (std::size_t i = 0; i < total; ++i) scene.objects.push_back({labels[i], boxes[i]});
      caps = detail::count_captions(groups, cfg.captions_per_scene, rng);
    }

    scene.features.assign(scene.objects.size() * cfg.d_feature, 0.0f);
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
      float* row = scene.features.data() + o * cfg.d_feature;
      row[scene.objects[o].category] = 1.0f;
      for (std::size_t j = 0; j < cfg.d_feature; ++j) {
        row[j] += static_cast<float>(cfg.noise_sigma * rng.normal());
      }
    }
    corpus.captions.push_back({scene.image_id, std::move(caps)});
    corpus.scenes.push_back(std::move(scene));
  }
  const std::size_t n_train = cfg.n_scenes * 8 / 10;
  const std::size_t n_val = cfg.n_scenes / 10;
  for (std::size_t s = 0; s < cfg.n_scenes; ++s) {
    if (s < n_train) {
      corpus.train.push_back(s);
    } else if (s < n_train + n_val) {
      corpus.val.push_back(s);
    } else {
      corpus.test.push_back(s);
    }
  }
  return corpus;
}

}  // namespace ort
