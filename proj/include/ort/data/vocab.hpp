#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ort/errors.hpp"
#include "ort/model/transformer.hpp"

namespace ort {

/// Lowercase, drop ASCII punctuation, split on whitespace.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::ispunct(ch)) continue;
    if (std::isspace(ch)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(static_cast<char>(std::tolower(ch)));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join(const std::vector<std::string>& tokens, const std::string& sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

/// Token <-> id map with PAD=0, BOS=1, EOS=2, UNK=3 reserved.
class Vocab {
 public:
  Vocab() : tokens_{"<pad>", "<bos>", "<eos>", "<unk>"} { reindex(); }

  /// Tokens seen at least min_freq times, sorted alphabetically after the
  /// reserved ids.
  static Vocab build(const std::vector<std::string>& captions, std::size_t min_freq = 1) {
    std::map<std::string, std::size_t> freq;
    for (const auto& c : captions) {
      for (auto& t : tokenize(c)) ++freq[t];
    }
    Vocab v;
    for (const auto& [tok, n] : freq) {
      if (n >= min_freq) v.tokens_.push_back(tok);
    }
    v.reindex();
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& non_reserved) {
    Vocab v;
    for (const auto& t : non_reserved) v.tokens_.push_back(t);
    v.reindex();
    if (v.index_.size() != v.tokens_.size()) throw FormatError("vocabulary contains duplicate tokens");
    return v;
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }

  [[nodiscard]] int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  [[nodiscard]] const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) return tokens_[kUnkId];
    return tokens_[id];
  }

  /// BOS, token ids, EOS.
  [[nodiscard]] std::vector<int> encode(const std::string& caption) const {
    std::vector<int> ids{kBosId};
    for (const auto& t : tokenize(caption)) ids.push_back(id(t));
    ids.push_back(kEosId);
    return ids;
  }

  /// Stops at the first EOS; PAD and BOS are dropped, UNK renders as <unk>.
  [[nodiscard]] std::string decode(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    for (int i : ids) {
      if (i == kEosId) break;
      if (i == kPadId || i == kBosId) continue;
      words.push_back(token(i));
    }
    return join(words);
  }

  [[nodiscard]] std::vector<std::string> non_reserved_tokens() const {
    return {tokens_.begin() + 4, tokens_.end()};
  }

  /// Single-line form stored in checkpoints.
  [[nodiscard]] std::string serialize() const { return join(non_reserved_tokens()); }

  static Vocab deserialize(const std::string& line) { return from_tokens(tokenize(line)); }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ort
