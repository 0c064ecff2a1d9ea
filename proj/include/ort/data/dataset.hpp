#pragma once

#include <string>
#include <vector>

#include "ort/data/corpus.hpp"
#include "ort/data/feature_io.hpp"
#include "ort/data/vocab.hpp"
#include "ort/numerics/tensor.hpp"

namespace ort {

/// Model-ready view of one image.
struct ImageInput {
  std::string image_id;
  Tensor<float> features;  // [N x d_feature]
  std::vector<BoundingBox> boxes;
};

/// One reference caption of one image, encoded BOS .. EOS.
struct CaptionPair {
  std::size_t image = 0;  // index into Dataset::images
  std::vector<int> ids;
};

struct Dataset {
  std::vector<ImageInput> images;
  std::vector<CaptionPair> train;
  std::vector<CaptionPair> val;
};

inline ImageInput to_image_input(const FeatureRecord& r) {
  return {r.image_id, Tensor<float>({r.n, r.d}, r.features), r.bounding_boxes()};
}

inline ImageInput to_image_input(const Scene& s) {
  return {s.image_id, Tensor<float>({s.objects.size(), s.d_feature}, s.features), s.boxes()};
}

/// Encodes a caption, keeping at most max_words words before EOS.
inline std::vector<int> encode_caption(const Vocab& vocab, const std::string& caption, std::size_t max_words) {
  auto ids = vocab.encode(caption);
  if (ids.size() > max_words + 2) {
    ids.resize(max_words + 1);
    ids.push_back(kEosId);
  }
  return ids;
}

/// Every reference caption becomes its own pair. `train_images` and
/// `val_images` index into `images`.
inline Dataset make_dataset(std::vector<ImageInput> images, const std::vector<CaptionRecord>& captions,
                            const std::vector<std::size_t>& train_images, const std::vector<std::size_t>& val_images,
                            const Vocab& vocab, std::size_t max_words) {
  if (captions.size() != images.size()) {
    throw ConfigError("dataset: " + std::to_string(images.size()) + " images but " +
                      std::to_string(captions.size()) + " caption records");
  }
  Dataset ds;
  ds.images = std::move(images);
  auto add = [&](const std::vector<std::size_t>& which, std::vector<CaptionPair>& into) {
    for (auto i : which) {
      if (captions[i].image_id != ds.images[i].image_id) {
        throw ConfigError("dataset: caption record '" + captions[i].image_id + "' not aligned with image '" +
                          ds.images[i].image_id + "'");
      }
      for (const auto& c : captions[i].captions) into.push_back({i, encode_caption(vocab, c, max_words)});
    }
  };
  add(train_images, ds.train);
  add(val_images, ds.val);
  return ds;
}

inline Dataset make_dataset(const Corpus& corpus, const Vocab& vocab, std::size_t max_words) {
  std::vector<ImageInput> images;
  images.reserve(corpus.scenes.size());
  for (const auto& s : corpus.scenes) images.push_back(to_image_input(s));
  return make_dataset(std::move(images), corpus.captions, corpus.train, corpus.val, vocab, max_words);
}

/// Vocabulary over the training captions of a corpus.
inline Vocab build_vocab(const std::vector<CaptionRecord>& captions, const std::vector<std::size_t>& which,
                         std::size_t min_freq = 1) {
  std::vector<std::string> all;
  for (auto i : which) all.insert(all.end(), captions[i].captions.begin(), captions[i].captions.end());
  return Vocab::build(all, min_freq);
}

}  // namespace ort
