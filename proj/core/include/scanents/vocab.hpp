#pragma once

#include <map>
#include <string>
#include <vector>

#include "scanents/error.hpp"

namespace scanents {

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

// Word-to-id table. The special tokens <bos>, <eos>, <unk> always occupy the
// first three slots; unknown words map to <unk>.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& words);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::vector<int64_t> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int64_t>& ids) const;

  int size() const { return static_cast<int>(words_.size()); }
  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

// Sorted unique class labels. Lookup of an unlisted class throws
// VocabOverflow.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(const std::vector<std::string>& labels);

  int id(const std::string& label) const;
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int> index_;
};

}  // namespace scanents
