#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ort/data/caption_io.hpp"
#include "ort/data/corpus.hpp"
#include "ort/data/feature_io.hpp"

namespace ort {

/// On-disk corpus layout: per split a feature file, a caption file and a
/// scene layout file, plus manifest.json describing the generator settings
/// and every file.
struct CorpusPaths {
  std::filesystem::path dir;

  [[nodiscard]] std::string features(const std::string& split) const { return (dir / (split + ".ortf")).string(); }
  [[nodiscard]] std::string captions(const std::string& split) const {
    return (dir / (split + ".captions.jsonl")).string();
  }
  [[nodiscard]] std::string scenes(const std::string& split) const {
    return (dir / (split + ".scenes.jsonl")).string();
  }
  [[nodiscard]] std::string manifest() const { return (dir / "manifest.json").string(); }
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"train", "val", "test"};
  return names;
}

namespace detail {

/// 64-bit FNV-1a, hex encoded; content fingerprint for the manifest.
inline std::string fnv1a_hex(const std::vector<char>& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Json corpus_config_json(const CorpusConfig& c) {
  return {{"n_scenes", c.n_scenes},
          {"n_categories", c.n_categories},
          {"d_feature", c.d_feature},
          {"noise_sigma", c.noise_sigma},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"min_box", c.min_box},
          {"max_box", c.max_box},
          {"captions_per_scene", c.captions_per_scene},
          {"max_objects", c.max_objects},
          {"p_single", c.p_single},
          {"p_relation", c.p_relation}};
}

inline CorpusConfig corpus_config_from_json(const Json& j) {
  CorpusConfig c;
  c.n_scenes = j.at("n_scenes");
  c.n_categories = j.at("n_categories");
  c.d_feature = j.at("d_feature");
  c.noise_sigma = j.at("noise_sigma");
  c.image_width = j.at("image_width");
  c.image_height = j.at("image_height");
  c.min_box = j.at("min_box");
  c.max_box = j.at("max_box");
  c.captions_per_scene = j.at("captions_per_scene");
  c.max_objects = j.at("max_objects");
  c.p_single = j.at("p_single");
  c.p_relation = j.at("p_relation");
  return c;
}

inline const std::vector<std::size_t>& split_indices(const Corpus& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "val") return c.val;
  return c.test;
}

}  // namespace detail

/// Writes every split and the manifest. Output depends only on the corpus
/// and seed, so regenerating with the same flags rewrites identical bytes.
inline void write_corpus(const std::string& dir, const Corpus& corpus, std::uint64_t seed) {
  const CorpusPaths paths{dir};
  std::error_code ec;
  std::filesystem::create_directories(paths.dir, ec);
  if (ec) throw FormatError("cannot create directory '" + dir + "': " + ec.message());
  Json files = Json::array();
  auto record = [&](const std::string& path, const std::vector<char>& bytes) {
    io::write_file(path, bytes);
    files.push_back({{"file", std::filesystem::path(path).filename().string()},
                     {"bytes", bytes.size()},
                     {"fnv1a64", detail::fnv1a_hex(bytes)}});
  };
  Json splits;
  for (const auto& split : split_names()) {
    std::vector<FeatureRecord> feats;
    std::vector<CaptionRecord> caps;
    std::vector<Scene> scenes;
    for (auto i : detail::split_indices(corpus, split)) {
      feats.push_back(to_feature_record(corpus.scenes[i]));
      caps.push_back(corpus.captions[i]);
      scenes.push_back(corpus.scenes[i]);
    }
    splits[split] = feats.size();
    record(paths.features(split), encode_features(feats));
    const auto ct = captions_to_jsonl(caps);
    record(paths.captions(split), {ct.begin(), ct.end()});
    const auto st = scenes_to_jsonl(scenes);
    record(paths.scenes(split), {st.begin(), st.end()});
  }
  Json m;
  m["format"] = "ortcap-corpus";
  m["version"] = 1;
  m["seed"] = seed;
  m["config"] = detail::corpus_config_json(corpus.config);
  m["splits"] = splits;
  m["files"] = files;
  io::write_text(paths.manifest(), m.dump(2) + "\n");
}

struct LoadedCorpus {
  Corpus corpus;
  std::uint64_t seed = 0;
};

/// Reads a directory written by write_corpus. Scenes are ordered train,
/// val, test; boxes come from the scene files at full precision and
/// feature rows from the binary files.
inline LoadedCorpus read_corpus(const std::string& dir) {
  const CorpusPaths paths{dir};
  if (!std::filesystem::exists(paths.manifest())) {
    throw FormatError("'" + dir + "' is not a corpus directory (no manifest.json); run gen-data first");
  }
  Json m;
  try {
    m = Json::parse(io::read_text(paths.manifest()));
  } catch (const Json::exception& e) {
    throw FormatError(paths.manifest() + ": " + e.what());
  }
  LoadedCorpus out;
  try {
    out.seed = m.at("seed").get<std::uint64_t>();
    out.corpus.config = detail::corpus_config_from_json(m.at("config"));
  } catch (const Json::exception& e) {
    throw FormatError(paths.manifest() + ": " + e.what());
  }
  Corpus& c = out.corpus;
  for (const auto& split : split_names()) {
    const auto feats = read_features(paths.features(split));
    const auto caps = read_captions(paths.captions(split));
    auto scenes = read_scenes(paths.scenes(split));
    if (feats.size() != caps.size() || feats.size() != scenes.size()) {
      throw FormatError(dir + ": split '" + split + "' has " + std::to_string(feats.size()) + " feature records, " +
                        std::to_string(caps.size()) + " caption records and " + std::to_string(scenes.size()) +
                        " scenes");
    }
    auto& idx = split == "train" ? c.train : split == "val" ? c.val : c.test;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (feats[i].image_id != scenes[i].image_id || caps[i].image_id != scenes[i].image_id) {
        throw FormatError(dir + ": split '" + split + "' record " + std::to_string(i) + " ids disagree ('" +
                          feats[i].image_id + "', '" + caps[i].image_id + "', '" + scenes[i].image_id + "')");
      }
      if (feats[i].n != scenes[i].objects.size()) {
        throw FormatError(dir + ": '" + scenes[i].image_id + "' has " + std::to_string(feats[i].n) +
                          " feature rows but " + std::to_string(scenes[i].objects.size()) + " objects");
      }
      scenes[i].d_feature = feats[i].d;
      scenes[i].features = feats[i].features;
      idx.push_back(c.scenes.size());
      c.scenes.push_back(std::move(scenes[i]));
      c.captions.push_back(caps[i]);
    }
  }
  return out;
}

}  // namespace ort
