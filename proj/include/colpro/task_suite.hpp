#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colpro/dense.hpp"
#include "colpro/rng.hpp"
#include "colpro/vocab.hpp"

namespace colpro {

/// Archetype frame embeddings standing in for a frozen visual encoder: K
/// unit-norm vectors, each annotated with the scene facts questions ask
/// about.
struct FrameCodebook {
  struct Entry {
    int object, location, attribute, action;  // indices into the word domains
  };
  Mat vectors;  // K x feat_dim, unit-norm rows, pairwise cosine < 0.95
  std::vector<Entry> entries;
  /// Scene graph: the archetype that usually follows each archetype. Episodes
  /// walk this table (with noise), which is what gives frame order a
  /// learnable temporal signal.
  std::vector<int> successors;

  int size() const { return static_cast<int>(entries.size()); }
};

/// One synthetic clip: an archetype id per frame plus the noisy features the
/// model actually sees.
struct Episode {
  std::vector<int> frame_ids;
  Mat features;  // num_frames x feat_dim: archetype + gaussian noise
};

/// A realized question: the template type, the slot it was instantiated with,
/// and the rendered tokens.
struct QuestionSpec {
  std::string type;
  int slot = -1;        // index into the slot domain for the template
  std::vector<int> tokens;
};

/// A question block with generation provenance, used by the rehearsal-free
/// audit to prove negatives are templated rather than replayed.
struct NegativeQuestion {
  std::string type;
  std::vector<int> tokens;
  int source_sample_id = -1;
  bool templated = false;
};

struct Sample {
  int sample_id = -1;
  int task_id = -1;
  Episode episode;
  QuestionSpec question;
  std::vector<std::vector<int>> choices;  // answer-choice token blocks
  int correct_choice = -1;
  std::vector<int> answer_tokens;         // == choices[correct_choice]
  std::vector<NegativeQuestion> negatives;
};

struct Task {
  int id = -1;
  std::string question_type;
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

struct SuiteConfig {
  std::string family = "next";  // "next" (8 types) or "drama" (5 types)
  int train_per_task = 500;
  int eval_per_task = 200;
  int num_frames = 10;
  int feat_dim = 32;
  int codebook_size = 32;
  double noise_sigma = 0.05;
  /// Probability that a frame ignores the successor table and jumps to a
  /// uniform archetype instead.
  double transition_noise = 0.2;
  int negatives_per_sample = 2;
  int choices_per_question = 5;

  void validate() const;
};

struct Suite {
  SuiteConfig config;
  std::uint64_t seed = 0;
  Vocab vocab;
  FrameCodebook codebook;
  std::vector<Task> tasks;

  const Task& task_by_type(const std::string& type) const;
  /// Digest of the canonical serialized form.
  std::uint64_t digest() const;
};

/// Question types per family, in the documented worst-forgetting order.
const std::vector<std::string>& question_types(const std::string& family);
/// Candidate learning orders bundled with the artifact (family "next").
const std::vector<std::vector<std::string>>& bundled_candidate_orders();

FrameCodebook build_codebook(const SuiteConfig& cfg, Rng& rng);

/// Deterministically generates the full task stream: one task per question
/// type, disjoint train/eval samples, oracle-verified answer choices.
Suite build_suite(const SuiteConfig& cfg, std::uint64_t seed);

/// One extra sample outside any task's stored set (the backbone warmup
/// corpus draws these with its own id range and stream).
Sample generate_extra_sample(const SuiteConfig& cfg, const FrameCodebook& cb,
                             const Vocab& vocab, const std::string& type,
                             int task_id, int sample_id, Rng rng);

/// Templated negatives for one episode: `count` questions of *other* types,
/// instantiated with entities present in the episode. Never copies stored
/// samples from any task.
std::vector<NegativeQuestion> sample_negative_questions(
    const FrameCodebook& codebook, const Episode& episode,
    const std::string& current_type, const std::string& family, int count,
    int source_sample_id, const Vocab& vocab, Rng& rng);

/// Ground-truth answer tokens computed from the episode annotations.
std::vector<int> oracle_answer_tokens(const FrameCodebook& codebook,
                                      const Episode& episode,
                                      const QuestionSpec& q,
                                      const Vocab& vocab);

/// Index of the oracle-correct choice; errors unless exactly one matches.
int oracle_answer(const FrameCodebook& codebook, const Episode& episode,
                  const QuestionSpec& q,
                  const std::vector<std::vector<int>>& choices,
                  const Vocab& vocab);

/// Regex (ECMAScript) the detokenized question of a type must match.
std::string question_regex(const std::string& type);

}  // namespace colpro
