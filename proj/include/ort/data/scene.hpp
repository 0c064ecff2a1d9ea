#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ort/geometry.hpp"

namespace ort {

struct SceneObject {
  int category = 0;
  BoundingBox box;
};

/// Synthetic stand-in for one detector pass over an image: objects with
/// categories and boxes, plus per-object feature rows.
struct Scene {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<SceneObject> objects;
  std::size_t d_feature = 0;
  std::vector<float> features;  // objects.size() x d_feature, row-major

  [[nodiscard]] std::vector<BoundingBox> boxes() const {
    std::vector<BoundingBox> out;
    out.reserve(objects.size());
    for (const auto& o : objects) out.push_back(o.box);
    return out;
  }
};

struct CaptionRecord {
  std::string image_id;
  std::vector<std::string> captions;
};

/// Spatial relation of a subject box with respect to a reference box.
enum class Relation { left_of, right_of, above, below, next_to };

inline constexpr std::size_t kRelationCount = 5;

inline const char* relation_phrase(Relation r) {
  switch (r) {
    case Relation::left_of: return "to the left of";
    case Relation::right_of: return "to the right of";
    case Relation::above: return "above";
    case Relation::below: return "below";
    case Relation::next_to: return "next to";
  }
  return "";
}

inline Relation inverse(Relation r) {
  switch (r) {
    case Relation::left_of: return Relation::right_of;
    case Relation::right_of: return Relation::left_of;
    case Relation::above: return Relation::below;
    case Relation::below: return Relation::above;
    case Relation::next_to: return Relation::next_to;
  }
  return r;
}

/// Below this many half-extents of separation on both axes two boxes are
/// "next to" each other.
inline constexpr double kNearThreshold = 1.6;

/// Relation of `subject` relative to `reference` in image coordinates (y
/// grows downward). Shared by the corpus generator and the relation metric.
inline Relation classify_relation(const BoundingBox& subject, const BoundingBox& reference) {
  const double dx = reference.x_center - subject.x_center;
  const double dy = reference.y_center - subject.y_center;
  const double rx = std::abs(dx) / ((subject.w + reference.w) / 2.0);
  const double ry = std::abs(dy) / ((subject.h + reference.h) / 2.0);
  if (std::max(rx, ry) < kNearThreshold) return Relation::next_to;
  if (rx >= ry) return dx > 0 ? Relation::left_of : Relation::right_of;
  return dy > 0 ? Relation::above : Relation::below;
}

inline const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {"cat", "dog", "bird", "car", "tree", "cup", "ball", "lamp",
                                                 "book", "vase", "chair", "boat"};
  return names;
}

inline std::string plural(const std::string& noun) { return noun + "s"; }

/// Multiplicity of every category present in a scene.
inline std::map<int, int> category_counts(const Scene& scene) {
  std::map<int, int> counts;
  for (const auto& o : scene.objects) ++counts[o.category];
  return counts;
}

/// Ground-truth relation target of a scene: exactly two objects of distinct
/// categories.
inline bool has_relation_truth(const Scene& scene) {
  return scene.objects.size() == 2 && scene.objects[0].category != scene.objects[1].category;
}

/// Ground-truth count target: some category appears more than once.
inline bool has_count_truth(const Scene& scene) {
  for (const auto& [cat, n] : category_counts(scene)) {
    if (n >= 2) return true;
  }
  return false;
}

}  // namespace ort
