#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>

#include "ort/errors.hpp"
#include "ort/geometry.hpp"

namespace ort {

/// How the encoder relates its object tokens.
///  - standard: plain softmax self-attention, no positional signal.
///  - geometric: self-attention gated by learned box-pair weights.
///  - ordered_positional: boxes sorted by `order`, sinusoidal positions added
///    to the embedded tokens, then standard attention.
enum class AttentionMode { standard, geometric, ordered_positional };

struct EncoderMode {
  AttentionMode attention = AttentionMode::standard;
  BoxOrder order = BoxOrder::none;

  friend bool operator==(const EncoderMode&, const EncoderMode&) = default;
};

inline std::string to_string(const EncoderMode& m) {
  switch (m.attention) {
    case AttentionMode::standard: return "standard";
    case AttentionMode::geometric: return "geometric";
    case AttentionMode::ordered_positional: return "ordered:" + to_string(m.order);
  }
  return "standard";
}

inline EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "standard") return {AttentionMode::standard, BoxOrder::none};
  if (s == "geometric") return {AttentionMode::geometric, BoxOrder::none};
  if (s.rfind("ordered:", 0) == 0) {
    const auto order = box_order_from_string(s.substr(8));
    if (order == BoxOrder::none) throw ConfigError("ordered mode needs size|ltr|ttb");
    return {AttentionMode::ordered_positional, order};
  }
  throw ConfigError("unknown mode '" + s + "' (expected standard|geometric|ordered:size|ordered:ltr|ordered:ttb)");
}

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t n_layers = 6;
  std::size_t d_ff = 2048;
  std::size_t d_feature = 2048;
  std::size_t vocab_size = 0;
  std::size_t max_caption_len = 20;  // words, excluding BOS/EOS
  double dropout_rate = 0.1;
  bool attention_dropout = true;
  EncoderMode mode;
  GeometryConfig geometry;

  [[nodiscard]] std::size_t d_k() const { return d_model / n_heads; }

  void validate() const {
    if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must equal n_heads (" +
                        std::to_string(n_heads) + ") x d_k");
    }
    if (n_layers == 0) throw ConfigError("n_layers must be >= 1");
    if (d_ff == 0) throw ConfigError("d_ff must be >= 1");
    if (d_feature == 0) throw ConfigError("d_feature must be >= 1");
    if (vocab_size < 5) throw ConfigError("vocab_size must cover the reserved ids plus one token");
    if (max_caption_len == 0) throw ConfigError("max_caption_len must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
    if (d_model < 2) throw ConfigError("d_model must be >= 2");
    geometry.validate();
  }

  /// Sorted key=value lines; stored in checkpoints and compared on load.
  [[nodiscard]] std::string canonical_text() const {
    std::map<std::string, std::string> kv;
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    kv["attention_dropout"] = attention_dropout ? "1" : "0";
    kv["d_feature"] = std::to_string(d_feature);
    kv["d_ff"] = std::to_string(d_ff);
    kv["d_model"] = std::to_string(d_model);
    kv["dropout_rate"] = num(dropout_rate);
    kv["geometry.d_g"] = std::to_string(geometry.d_g);
    kv["geometry.eps_clamp"] = num(geometry.eps_clamp);
    kv["geometry.wavelength_base"] = num(geometry.wavelength_base);
    kv["geometry.y_denominator"] =
        geometry.y_denominator == YDenominator::height ? "height" : "paper_verbatim_y";
    kv["max_caption_len"] = std::to_string(max_caption_len);
    kv["mode"] = to_string(mode);
    kv["n_heads"] = std::to_string(n_heads);
    kv["n_layers"] = std::to_string(n_layers);
    kv["vocab_size"] = std::to_string(vocab_size);
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
  }

  static ModelConfig from_canonical_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("config line without '=': " + line);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = kv.find(k);
      if (it == kv.end()) throw FormatError("config is missing key '" + k + "'");
      return it->second;
    };
    auto to_size = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };
    ModelConfig c;
    try {
      c.attention_dropout = get("attention_dropout") == "1";
      c.d_feature = to_size("d_feature");
      c.d_ff = to_size("d_ff");
      c.d_model = to_size("d_model");
      c.dropout_rate = std::stod(get("dropout_rate"));
      c.geometry.d_g = to_size("geometry.d_g");
      c.geometry.eps_clamp = std::stod(get("geometry.eps_clamp"));
      c.geometry.wavelength_base = std::stod(get("geometry.wavelength_base"));
      c.geometry.y_denominator = get("geometry.y_denominator") == "height"
                                     ? YDenominator::height
                                     : YDenominator::paper_verbatim_y;
      c.max_caption_len = to_size("max_caption_len");
      c.mode = encoder_mode_from_string(get("mode"));
      c.n_heads = to_size("n_heads");
      c.n_layers = to_size("n_layers");
      c.vocab_size = to_size("vocab_size");
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("malformed config value: ") + e.what());
    } catch (const std::out_of_range& e) {
      throw FormatError(std::string("config value out of range: ") + e.what());
    }
    return c;
  }
};

}  // namespace ort
