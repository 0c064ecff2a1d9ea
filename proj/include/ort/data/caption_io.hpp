#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ort/data/binary_io.hpp"
#include "ort/data/scene.hpp"

namespace ort {

using Json = nlohmann::ordered_json;

namespace detail {

template <class F>
void for_each_jsonl(const std::string& text, const std::string& what, F&& f) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
      f(j);
    } catch (const Json::exception& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

/// One JSON object per line: {"image_id": ..., "captions": [...]}.
inline std::string captions_to_jsonl(const std::vector<CaptionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    Json j;
    j["image_id"] = r.image_id;
    j["captions"] = r.captions;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<CaptionRecord> captions_from_jsonl(const std::string& text, const std::string& what) {
  std::vector<CaptionRecord> out;
  detail::for_each_jsonl(text, what, [&](const Json& j) {
    CaptionRecord r{j.at("image_id").get<std::string>(), j.at("captions").get<std::vector<std::string>>()};
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_captions(const std::string& path, const std::vector<CaptionRecord>& records) {
  io::write_text(path, captions_to_jsonl(records));
}

inline std::vector<CaptionRecord> read_captions(const std::string& path) {
  return captions_from_jsonl(io::read_text(path), path);
}

/// Ground-truth scene layout, one JSON object per line. Feature rows live
/// in the binary feature file; this carries categories and boxes.
inline std::string scenes_to_jsonl(const std::vector<Scene>& scenes) {
  std::string out;
  for (const auto& s : scenes) {
    Json j;
    j["image_id"] = s.image_id;
    j["width"] = s.width;
    j["height"] = s.height;
    Json objs = Json::array();
    for (const auto& o : s.objects) {
      objs.push_back({{"category", o.category},
                      {"name", category_names().at(static_cast<std::size_t>(o.category))},
                      {"box", {o.box.x_center, o.box.y_center, o.box.w, o.box.h}}});
    }
    j["objects"] = objs;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<Scene> scenes_from_jsonl(const std::string& text, const std::string& what) {
  std::vector<Scene> out;
  detail::for_each_jsonl(text, what, [&](const Json& j) {
    Scene s;
    s.image_id = j.at("image_id").get<std::string>();
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    for (const auto& o : j.at("objects")) {
      const auto b = o.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw FormatError(what + ": box of '" + s.image_id + "' needs 4 numbers");
      s.objects.push_back({o.at("category").get<int>(), {b[0], b[1], b[2], b[3]}});
    }
    out.push_back(std::move(s));
  });
  return out;
}

inline void write_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  io::write_text(path, scenes_to_jsonl(scenes));
}

inline std::vector<Scene> read_scenes(const std::string& path) { return scenes_from_jsonl(io::read_text(path), path); }

}  // namespace ort
