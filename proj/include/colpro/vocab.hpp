#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace colpro {

/// Closed word-level vocabulary. The word list is fixed at construction (the
/// synthetic language plus segment markers); anything outside it is an error,
/// never an <unk>.
class Vocab {
 public:
  /// The built-in synthetic-world vocabulary.
  static Vocab standard();
  /// Rebuild from an explicit id-ordered word list (suite file round trip).
  static Vocab from_words(std::vector<std::string> words);

  int id(const std::string& word) const;
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  // Segment markers.
  int question_marker() const { return id("<q>"); }
  int video_marker() const { return id("<v>"); }
  int choices_marker() const { return id("<c>"); }
  int answer_marker() const { return id("<a>"); }
  int negatives_marker() const { return id("<nq>"); }
  int separator() const { return id("<sep>"); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Word domains used by templates and answer choices.
const std::vector<std::string>& object_words();
const std::vector<std::string>& location_words();
const std::vector<std::string>& attribute_words();
const std::vector<std::string>& action_words();
const std::vector<std::string>& count_words();  // "zero" .. "ten"

}  // namespace colpro
