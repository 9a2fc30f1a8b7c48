#include "colpro/vocab.hpp"

#include <sstream>

#include "colpro/errors.hpp"

namespace colpro {

const std::vector<std::string>& object_words() {
  static const std::vector<std::string> v = {"cat",  "dog", "ball", "car",
                                             "bird", "cup", "box",  "wolf"};
  return v;
}

const std::vector<std::string>& location_words() {
  static const std::vector<std::string> v = {"kitchen", "garden", "street",
                                             "park",    "hall",   "barn"};
  return v;
}

const std::vector<std::string>& attribute_words() {
  static const std::vector<std::string> v = {"red",   "blue", "green",
                                             "small", "big",  "shiny"};
  return v;
}

const std::vector<std::string>& action_words() {
  static const std::vector<std::string> v = {"jump", "run",  "fall",
                                             "spin", "push", "wave"};
  return v;
}

const std::vector<std::string>& count_words() {
  static const std::vector<std::string> v = {
      "zero", "one", "two",   "three", "four", "five",
      "six",  "seven", "eight", "nine",  "ten"};
  return v;
}

Vocab Vocab::standard() {
  std::vector<std::string> words = {"<q>", "<v>", "<c>", "<a>", "<nq>",
                                    "<sep>"};
  const std::vector<std::string> glue = {
      "what", "was",  "before", "the", "action", "why", "did",
      "appear", "how", "many",  "times", "where", "at",  "who",
      "do",   "look", "because", "?"};
  words.insert(words.end(), glue.begin(), glue.end());
  for (const auto* domain : {&object_words(), &location_words(),
                             &attribute_words(), &action_words(),
                             &count_words()})
    words.insert(words.end(), domain->begin(), domain->end());
  return from_words(std::move(words));
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  Vocab v;
  v.words_ = std::move(words);
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (v.index_.count(v.words_[i]))
      throw VocabError("duplicate word in vocabulary: " + v.words_[i]);
    v.index_[v.words_[i]] = static_cast<int>(i);
  }
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end())
    throw VocabError("word not in the closed vocabulary: '" + word + "'");
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size())
    throw VocabError("token id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

}  // namespace colpro
