#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbl/errors.hpp"

namespace sbl::tasks {

// Token <-> id map with <unk>/<pad>/<mask> specials. Content ids come first,
// sorted by (-frequency, token); the specials are appended in fixed order.
class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kMask = "<mask>";

  Vocab() = default;

  explicit Vocab(std::vector<std::string> tokens) : id_to_token_(std::move(tokens)) {
    for (size_t i = 0; i < id_to_token_.size(); ++i)
      token_to_id_[id_to_token_[i]] = static_cast<int64_t>(i);
    auto need = [&](const char* t) {
      auto it = token_to_id_.find(t);
      if (it == token_to_id_.end()) throw ConfigError(std::string("vocab: missing ") + t);
      return it->second;
    };
    unk_ = need(kUnk);
    pad_ = need(kPad);
    mask_ = need(kMask);
  }

  static Vocab build(const std::vector<std::vector<std::string>>& corpus, int min_freq = 1) {
    if (corpus.empty()) throw ContractError("vocab: empty corpus");
    std::map<std::string, int64_t> freq;
    for (const auto& sent : corpus)
      for (const auto& tok : sent)
        if (tok != kUnk && tok != kPad && tok != kMask) ++freq[tok];
    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [tok, f] : freq)
      if (f >= min_freq) kept.push_back({tok, f});
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> toks;
    for (auto& [tok, f] : kept) toks.push_back(tok);
    toks.push_back(kUnk);
    toks.push_back(kPad);
    toks.push_back(kMask);
    return Vocab(std::move(toks));
  }

  int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
  int64_t unk_id() const { return unk_; }
  int64_t pad_id() const { return pad_; }
  int64_t mask_id() const { return mask_; }

  int64_t encode(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? unk_ : it->second;
  }

  std::vector<int64_t> encode(const std::vector<std::string>& toks) const {
    std::vector<int64_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(encode(t));
    return ids;
  }

  const std::string& token(int64_t id) const {
    if (id < 0 || id >= size()) throw VocabError("vocab: id out of range");
    return id_to_token_[id];
  }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int64_t> token_to_id_;
  int64_t unk_ = -1, pad_ = -1, mask_ = -1;
};

}  // namespace sbl::tasks
