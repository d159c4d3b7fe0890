#include "data/tokenizer.hpp"

#include <sstream>

namespace pd::data {

namespace {
constexpr const char* kPlaceholder = "{classname}";

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}
}  // namespace

std::vector<std::string> template_words(const std::string& template_str) {
  std::vector<std::string> words = split_ws(template_str);
  if (words.empty()) throw ConfigError("empty prompt template");
  if (words.back() != kPlaceholder) {
    throw ConfigError("prompt template must end with " + std::string(kPlaceholder));
  }
  for (size_t i = 0; i + 1 < words.size(); ++i) {
    if (words[i] == kPlaceholder) {
      throw ConfigError("prompt template may contain only one trailing placeholder");
    }
  }
  words.pop_back();
  if (words.empty()) throw ConfigError("prompt template has no prefix words");
  return words;
}

int Vocabulary::add(const std::string& word) {
  auto it = ids_.find(word);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(words_.size());
  words_.push_back(word);
  ids_.emplace(word, id);
  return id;
}

Vocabulary Vocabulary::build(const std::string& template_str,
                             const std::vector<std::string>& class_names) {
  Vocabulary v;
  v.add("<pad>");
  v.add("<end>");
  for (const auto& w : template_words(template_str)) v.add(w);
  for (const auto& name : class_names) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("class name must be a single non-empty word: '" + name + "'");
    }
    v.add(name);
  }
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end()) {
    throw TokenizationError("word not in vocabulary: '" + word + "'");
  }
  return it->second;
}

TokenSeq template_token_ids(const Vocabulary& vocab, const std::string& template_str) {
  TokenSeq ids;
  for (const auto& w : template_words(template_str)) ids.push_back(vocab.id(w));
  return ids;
}

TokenSeq tokenize(const Vocabulary& vocab, const std::string& template_str,
                  const std::string& classname) {
  TokenSeq ids = template_token_ids(vocab, template_str);
  ids.push_back(vocab.id(classname));
  return ids;
}

}  // namespace pd::data
