#pragma once

#include <map>
#include <string>
#include <vector>

#include "util/errors.hpp"

namespace pd::data {

using TokenSeq = std::vector<int>;

// Whitespace tokenizer over a small closed vocabulary: padding/end markers,
// the template words, then the class names in order. No external tokenizer
// dependency; class names must be single whitespace-free words.
class Vocabulary {
 public:
  static Vocabulary build(const std::string& template_str,
                          const std::vector<std::string>& class_names);

  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return ids_.count(word) != 0; }
  const std::string& word(int id) const { return words_.at(id); }
  int size() const { return static_cast<int>(words_.size()); }

 private:
  int add(const std::string& word);
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

// Splits on whitespace; the "{classname}" placeholder must be the final word.
std::vector<std::string> template_words(const std::string& template_str);

// Token ids of the template prefix (everything before the class name).
TokenSeq template_token_ids(const Vocabulary& vocab, const std::string& template_str);

// "a photo of a {classname}" + "class_7" -> ids of [a, photo, of, a, class_7].
TokenSeq tokenize(const Vocabulary& vocab, const std::string& template_str,
                  const std::string& classname);

}  // namespace pd::data
