#pragma once

#include <string>
#include <vector>

#include "ort/data/binary_io.hpp"
#include "ort/data/scene.hpp"

namespace ort {

/// One image worth of detector-style input: N feature rows of width D and
/// N boxes (x_center, y_center, w, h) in pixels.
struct FeatureRecord {
  std::string image_id;
  float width = 0.0f;
  float height = 0.0f;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> features;  // n * d
  std::vector<float> boxes;     // n * 4

  [[nodiscard]] std::vector<BoundingBox> bounding_boxes() const {
    std::vector<BoundingBox> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back({boxes[i * 4], boxes[i * 4 + 1], boxes[i * 4 + 2], boxes[i * 4 + 3]});
    }
    return out;
  }

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

inline constexpr char kFeatureMagic[4] = {'O', 'R', 'T', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline FeatureRecord to_feature_record(const Scene& scene) {
  FeatureRecord r;
  r.image_id = scene.image_id;
  r.width = static_cast<float>(scene.width);
  r.height = static_cast<float>(scene.height);
  r.n = scene.objects.size();
  r.d = scene.d_feature;
  r.features = scene.features;
  for (const auto& o : scene.objects) {
    r.boxes.push_back(static_cast<float>(o.box.x_center));
    r.boxes.push_back(static_cast<float>(o.box.y_center));
    r.boxes.push_back(static_cast<float>(o.box.w));
    r.boxes.push_back(static_cast<float>(o.box.h));
  }
  return r;
}

/// Serializes records back to back. Layout per record (little-endian):
/// "ORTF", u32 version, u32 id length + UTF-8 id, f32 width, f32 height,
/// u32 N, u32 D, N*D f32 features, N*4 f32 boxes.
inline std::vector<char> encode_features(const std::vector<FeatureRecord>& records) {
  io::ByteWriter w;
  for (const auto& r : records) {
    if (r.features.size() != r.n * r.d || r.boxes.size() != r.n * 4) {
      throw DimensionError("feature record '" + r.image_id + "' has inconsistent extents");
    }
    w.raw(std::string(kFeatureMagic, 4));
    w.u32(kFeatureVersion);
    w.str(r.image_id);
    w.f32(r.width);
    w.f32(r.height);
    w.u32(static_cast<std::uint32_t>(r.n));
    w.u32(static_cast<std::uint32_t>(r.d));
    for (float v : r.features) w.f32(v);
    for (float v : r.boxes) w.f32(v);
  }
  return w.bytes();
}

inline std::vector<FeatureRecord> decode_features(std::vector<char> bytes, const std::string& what) {
  io::ByteReader rd(std::move(bytes), what);
  std::vector<FeatureRecord> out;
  if (rd.at_end()) rd.fail("empty feature file", 0);
  while (!rd.at_end()) {
    const std::size_t start = rd.offset();
    if (rd.raw(4, "magic") != std::string(kFeatureMagic, 4)) rd.fail("bad magic (expected \"ORTF\")", start);
    const std::size_t vpos = rd.offset();
    const auto version = rd.u32("version");
    if (version != kFeatureVersion) rd.fail("unsupported version " + std::to_string(version), vpos);
    FeatureRecord r;
    r.image_id = rd.str("image id");
    r.width = rd.f32("image width");
    r.height = rd.f32("image height");
    r.n = rd.u32("object count");
    r.d = rd.u32("feature width");
    if (r.n == 0 || r.d == 0) rd.fail("record '" + r.image_id + "' has zero objects or zero feature width", start);
    rd.need((r.n * r.d + r.n * 4) * 4, "feature and box payload of '" + r.image_id + "'");
    r.features.resize(r.n * r.d);
    for (auto& v : r.features) v = rd.f32("feature");
    r.boxes.resize(r.n * 4);
    for (auto& v : r.boxes) v = rd.f32("box");
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_features(const std::string& path, const std::vector<FeatureRecord>& records) {
  io::write_file(path, encode_features(records));
}

inline std::vector<FeatureRecord> read_features(const std::string& path) {
  return decode_features(io::read_file(path), path);
}

}  // namespace ort
