#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ort/data/binary_io.hpp"
#include "ort/data/vocab.hpp"
#include "ort/model/transformer.hpp"

namespace ort {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named f32 tensor as stored on disk.
struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Generic container: 4-byte magic, u32 version, length-prefixed header
/// text, then (u32 name length, name, u32 rank, u32 dims..., f32 data)
/// records until end of file.
struct TensorArchive {
  std::string header;
  std::vector<StoredTensor> tensors;
};

inline std::vector<char> encode_archive(const std::string& magic, const TensorArchive& ar) {
  io::ByteWriter w;
  w.raw(magic);
  w.u32(kCheckpointVersion);
  w.str(ar.header);
  std::set<std::string> seen;
  for (const auto& t : ar.tensors) {
    if (!seen.insert(t.name).second) throw UsageError("duplicate tensor name '" + t.name + "'");
    if (shape_size(t.shape) != t.data.size()) throw DimensionError("tensor '" + t.name + "' data/shape mismatch");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data) w.f32(v);
  }
  return w.bytes();
}

inline TensorArchive decode_archive(const std::string& magic, std::vector<char> bytes, const std::string& what) {
  io::ByteReader rd(std::move(bytes), what);
  if (rd.raw(magic.size(), "magic") != magic) rd.fail("bad magic (expected \"" + magic + "\")", 0);
  const std::size_t vpos = rd.offset();
  const auto version = rd.u32("version");
  if (version != kCheckpointVersion) rd.fail("unsupported version " + std::to_string(version), vpos);
  TensorArchive ar;
  ar.header = rd.str("header text");
  while (!rd.at_end()) {
    StoredTensor t;
    t.name = rd.str("tensor name");
    const auto rank = rd.u32("rank of '" + t.name + "'");
    if (rank == 0 || rank > 8) rd.fail("implausible rank " + std::to_string(rank) + " for '" + t.name + "'", rd.offset() - 4);
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(rd.u32("extent of '" + t.name + "'"));
    const std::size_t n = shape_size(t.shape);
    rd.need(n * 4, "data of '" + t.name + "'");
    t.data.resize(n);
    for (auto& v : t.data) v = rd.f32("data");
    ar.tensors.push_back(std::move(t));
  }
  return ar;
}

/// Everything needed to rebuild a captioner: architecture, vocabulary and
/// weights.
struct Checkpoint {
  ModelConfig config;
  Vocab vocab;
  ModelParams<float> params;
};

namespace detail {

inline std::string checkpoint_header(const ModelConfig& cfg, const Vocab& vocab) {
  return cfg.canonical_text() + "vocab=" + vocab.serialize() + "\n";
}

inline std::pair<std::string, std::string> split_vocab_line(const std::string& header) {
  const std::string key = "vocab=";
  std::istringstream is(header);
  std::string line, config, vocab_line;
  bool found = false;
  while (std::getline(is, line)) {
    if (line.rfind(key, 0) == 0) {
      vocab_line = line.substr(key.size());
      found = true;
    } else {
      config += line + "\n";
    }
  }
  if (!found) throw FormatError("checkpoint header has no vocab line");
  return {config, vocab_line};
}

inline std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
  return out;
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const ModelConfig& cfg, const Vocab& vocab,
                                           const ModelParams<float>& params) {
  if (vocab.size() != cfg.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " tokens but config says " +
                      std::to_string(cfg.vocab_size));
  }
  TensorArchive ar;
  ar.header = detail::checkpoint_header(cfg, vocab);
  for (const auto& [name, t] : params.named()) {
    ar.tensors.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
  return encode_archive("ORTC", ar);
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Vocab& vocab,
                            const ModelParams<float>& params) {
  io::write_file(path, encode_checkpoint(cfg, vocab, params));
}

/// Copies stored tensors into `params` by name. Unknown or missing names are
/// reported together before any shape check.
inline void assign_tensors(const std::vector<StoredTensor>& stored, ModelParams<float>& params,
                           const std::string& what) {
  auto named = params.named();
  std::map<std::string, Tensor<float>> expected(named.begin(), named.end());
  std::set<std::string> present;
  std::vector<std::string> unknown, missing;
  for (const auto& t : stored) {
    present.insert(t.name);
    if (!expected.count(t.name)) unknown.push_back(t.name);
  }
  for (const auto& [name, t] : named) {
    if (!present.count(name)) missing.push_back(name);
  }
  if (!unknown.empty() || !missing.empty()) {
    std::string msg = what + ": parameter names do not match the model";
    if (!unknown.empty()) msg += "; unknown: " + detail::join_names(unknown);
    if (!missing.empty()) msg += "; missing: " + detail::join_names(missing);
    throw FormatError(msg);
  }
  for (const auto& t : stored) {
    auto dst = expected.at(t.name);
    if (dst.shape() != t.shape) {
      throw FormatError(what + ": tensor '" + t.name + "' has shape " + shape_str(t.shape) + ", model expects " +
                        shape_str(dst.shape()));
    }
    std::copy(t.data.begin(), t.data.end(), dst.mutable_data().begin());
  }
}

inline Checkpoint decode_checkpoint(std::vector<char> bytes, const std::string& what) {
  const TensorArchive ar = decode_archive("ORTC", std::move(bytes), what);
  const auto [config_text, vocab_line] = detail::split_vocab_line(ar.header);
  Checkpoint ck{ModelConfig::from_canonical_text(config_text), Vocab::deserialize(vocab_line), {}};
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(what + ": stored config is invalid: " + e.what());
  }
  ck.params = init_params<float>(ck.config, 0);
  assign_tensors(ar.tensors, ck.params, what);
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

/// Loads and checks against the configuration the caller intends to run.
/// Parameter names are compared first, so a geometric checkpoint offered to a
/// standard-mode model fails by naming its W_G tensors.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  const TensorArchive ar = decode_archive("ORTC", io::read_file(path), path);
  const auto [config_text, vocab_line] = detail::split_vocab_line(ar.header);
  ModelParams<float> params = init_params<float>(expected, 0);
  assign_tensors(ar.tensors, params, path);
  const ModelConfig stored = ModelConfig::from_canonical_text(config_text);
  if (stored.canonical_text() != expected.canonical_text()) {
    std::istringstream a(stored.canonical_text()), b(expected.canonical_text());
    std::string la, lb, diffs;
    while (std::getline(a, la) && std::getline(b, lb)) {
      if (la != lb) diffs += (diffs.empty() ? "" : ", ") + la + " (expected " + lb + ")";
    }
    throw ConfigError(path + ": checkpoint config does not match: " + diffs);
  }
  return {stored, Vocab::deserialize(vocab_line), std::move(params)};
}

}  // namespace ort
