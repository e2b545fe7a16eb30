#include "scanents/vocab.hpp"

#include <algorithm>
#include <set>

namespace scanents {

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  auto push = [this](const std::string& w) {
    if (index_.emplace(w, static_cast<int>(words_.size())).second) words_.push_back(w);
  };
  push(kBosToken);
  push(kEosToken);
  push(kUnkToken);
  for (const auto& w : words) push(w);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk() : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabOverflow("token id " + std::to_string(id));
  return words_[id];
}

std::vector<int64_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int64_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int64_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int64_t i : ids) out.push_back(token(static_cast<int>(i)));
  return out;
}

ClassVocabulary::ClassVocabulary(const std::vector<std::string>& labels) {
  std::set<std::string> unique(labels.begin(), labels.end());
  labels_.assign(unique.begin(), unique.end());
  for (size_t i = 0; i < labels_.size(); ++i) index_[labels_[i]] = static_cast<int>(i);
}

int ClassVocabulary::id(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw VocabOverflow("unknown class label: " + label);
  return it->second;
}

}  // namespace scanents
