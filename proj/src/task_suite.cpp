#include "colpro/task_suite.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "colpro/errors.hpp"

namespace colpro {

void SuiteConfig::validate() const {
  if (family != "next" && family != "drama")
    throw ConfigError("suite family must be 'next' or 'drama', got '" +
                      family + "'");
  if (train_per_task < 1 || eval_per_task < 1)
    throw ConfigError("suite sample counts must be positive");
  if (num_frames < 2) throw ConfigError("num_frames must be >= 2");
  {
    const int annotation_slots =
        static_cast<int>(object_words().size() + location_words().size() +
                         attribute_words().size() + action_words().size());
    if (feat_dim < annotation_slots)
      throw ConfigError("feat_dim must cover the annotation blocks (>= " +
                        std::to_string(annotation_slots) + ")");
  }
  if (codebook_size < 4) throw ConfigError("codebook_size must be >= 4");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (transition_noise < 0 || transition_noise > 1)
    throw ConfigError("transition_noise must lie in [0, 1]");
  if (negatives_per_sample < 1)
    throw ConfigError("negatives_per_sample must be >= 1");
  if (choices_per_question < 2)
    throw ConfigError("choices_per_question must be >= 2");
  if (num_frames >= static_cast<int>(count_words().size()))
    throw ConfigError("num_frames exceeds the count-word domain");
}

const std::vector<std::string>& question_types(const std::string& family) {
  // Default orders are the documented worst-forgetting learning orders.
  static const std::vector<std::string> next_types = {"TP", "CW", "DC", "TC",
                                                      "DL", "DO", "TN", "CH"};
  static const std::vector<std::string> drama_types = {"what", "who", "where",
                                                       "how", "why"};
  if (family == "next") return next_types;
  if (family == "drama") return drama_types;
  throw ConfigError("unknown suite family '" + family + "'");
}

const std::vector<std::vector<std::string>>& bundled_candidate_orders() {
  static const std::vector<std::vector<std::string>> orders = {
      {"CH", "DL", "TP", "TC", "DC", "DO", "TN", "CW"},
      {"TP", "TN", "CH", "TC", "DL", "DO", "CW", "DC"},
      {"DO", "CW", "DC", "CH", "TP", "TC", "TN", "DL"},
      {"CW", "DO", "TN", "DL", "TC", "TP", "DC", "CH"},
      {"TP", "CW", "DC", "TC", "DL", "DO", "TN", "CH"},
  };
  return orders;
}

FrameCodebook build_codebook(const SuiteConfig& cfg, Rng& rng) {
  FrameCodebook cb;
  const int k = cfg.codebook_size;
  cb.vectors = Mat(k, cfg.feat_dim);

  // Distinct annotation tuples keep archetypes answer-distinguishable.
  std::set<std::tuple<int, int, int, int>> seen;
  for (int i = 0; i < k; ++i) {
    FrameCodebook::Entry e{};
    do {
      e.object = rng.uniform_int(0, static_cast<int>(object_words().size()) - 1);
      e.location =
          rng.uniform_int(0, static_cast<int>(location_words().size()) - 1);
      e.attribute =
          rng.uniform_int(0, static_cast<int>(attribute_words().size()) - 1);
      e.action = rng.uniform_int(0, static_cast<int>(action_words().size()) - 1);
    } while (!seen.insert({e.object, e.location, e.attribute, e.action}).second);
    cb.entries.push_back(e);
  }

  // Archetype vectors carry their annotations in dedicated coordinate
  // blocks plus a noisy tail, the way a frozen semantic encoder's features
  // are linearly probe-able for such attributes. Distinct tuples differ in
  // at least one block, which also guarantees the distinguishability bound.
  const int n_obj = static_cast<int>(object_words().size());
  const int n_loc = static_cast<int>(location_words().size());
  const int n_att = static_cast<int>(attribute_words().size());
  for (int i = 0; i < k; ++i) {
    bool ok = false;
    while (!ok) {
      const FrameCodebook::Entry& e = cb.entries[static_cast<std::size_t>(i)];
      for (int j = 0; j < cfg.feat_dim; ++j)
        cb.vectors(i, j) = 0.12 * rng.normal();
      cb.vectors(i, e.object) += 1.0;
      cb.vectors(i, n_obj + e.location) += 1.0;
      cb.vectors(i, n_obj + n_loc + e.attribute) += 1.0;
      cb.vectors(i, n_obj + n_loc + n_att + e.action) += 1.0;
      cb.vectors.row(i).normalize();
      ok = true;
      for (int p = 0; p < i && ok; ++p)
        if (cb.vectors.row(i).dot(cb.vectors.row(p)) >= 0.95) ok = false;
    }
  }

  // successor permutation: uniform stationary distribution, deterministic
  // "usually follows" structure
  cb.successors.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cb.successors[static_cast<std::size_t>(i)] = i;
  rng.shuffle(cb.successors);
  return cb;
}

namespace {

int first_frame_with_object(const FrameCodebook& cb, const Episode& ep,
                            int obj) {
  for (std::size_t i = 0; i < ep.frame_ids.size(); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[i])].object == obj)
      return static_cast<int>(i);
  return -1;
}

int first_frame_with_location(const FrameCodebook& cb, const Episode& ep,
                              int loc) {
  for (std::size_t i = 0; i < ep.frame_ids.size(); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[i])].location == loc)
      return static_cast<int>(i);
  return -1;
}

int first_frame_with_action(const FrameCodebook& cb, const Episode& ep,
                            int act) {
  for (std::size_t i = 0; i < ep.frame_ids.size(); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[i])].action == act)
      return static_cast<int>(i);
  return -1;
}

int count_object_frames(const FrameCodebook& cb, const Episode& ep, int obj) {
  int n = 0;
  for (int f : ep.frame_ids)
    if (cb.entries[static_cast<std::size_t>(f)].object == obj) ++n;
  return n;
}

const FrameCodebook::Entry& entry_at(const FrameCodebook& cb,
                                     const Episode& ep, int frame) {
  return cb.entries[static_cast<std::size_t>(
      ep.frame_ids[static_cast<std::size_t>(frame)])];
}

std::string render_question(const std::string& type, const std::string& slot) {
  if (type == "TP") return "what was before the action " + slot + " ?";
  if (type == "CW" || type == "why") return "why did the " + slot + " appear ?";
  if (type == "DC") return "how many times did the " + slot + " appear ?";
  if (type == "TC") return "what action was at the " + slot + " ?";
  if (type == "DL" || type == "where") return "where was the " + slot + " ?";
  if (type == "DO" || type == "what") return "what was at the " + slot + " ?";
  if (type == "TN") return "what did the " + slot + " do ?";
  if (type == "CH" || type == "how") return "how did the " + slot + " look ?";
  if (type == "who") return "who did the action " + slot + " ?";
  throw OracleError("unrecognized question template '" + type + "'");
}

// Slot candidates satisfying the template precondition, in deterministic
// order. present_only additionally restricts count questions to entities the
// episode actually shows (negative questions must stay on-episode).
std::vector<int> slot_candidates(const std::string& type,
                                 const FrameCodebook& cb, const Episode& ep,
                                 bool present_only) {
  std::vector<int> out;
  if (type == "TP") {
    for (int a = 0; a < static_cast<int>(action_words().size()); ++a)
      if (first_frame_with_action(cb, ep, a) >= 1) out.push_back(a);
  } else if (type == "CW" || type == "why") {
    for (int o = 0; o < static_cast<int>(object_words().size()); ++o)
      if (first_frame_with_object(cb, ep, o) >= 1) out.push_back(o);
  } else if (type == "DC") {
    for (int o = 0; o < static_cast<int>(object_words().size()); ++o)
      if (!present_only || first_frame_with_object(cb, ep, o) >= 0)
        out.push_back(o);  // absent objects allowed: the count is then zero
  } else if (type == "TC" || type == "DO" || type == "what") {
    for (int l = 0; l < static_cast<int>(location_words().size()); ++l)
      if (first_frame_with_location(cb, ep, l) >= 0) out.push_back(l);
  } else if (type == "DL" || type == "TN" || type == "CH" ||
             type == "where" || type == "how") {
    for (int o = 0; o < static_cast<int>(object_words().size()); ++o)
      if (first_frame_with_object(cb, ep, o) >= 0) out.push_back(o);
  } else if (type == "who") {
    for (int a = 0; a < static_cast<int>(action_words().size()); ++a)
      if (first_frame_with_action(cb, ep, a) >= 0) out.push_back(a);
  } else {
    throw OracleError("unrecognized question template '" + type + "'");
  }
  return out;
}

const std::vector<std::string>& slot_domain(const std::string& type) {
  if (type == "TP" || type == "who") return action_words();
  if (type == "TC" || type == "DO" || type == "what") return location_words();
  return object_words();
}

// The answer domain a template draws its choices from.
enum class AnswerDomain { kObject, kLocation, kAttribute, kAction, kCount,
                          kCause };

AnswerDomain answer_domain(const std::string& type) {
  if (type == "TP" || type == "DO" || type == "what" || type == "who")
    return AnswerDomain::kObject;
  if (type == "CW" || type == "why") return AnswerDomain::kCause;
  if (type == "DC") return AnswerDomain::kCount;
  if (type == "TC" || type == "TN") return AnswerDomain::kAction;
  if (type == "DL" || type == "where") return AnswerDomain::kLocation;
  if (type == "CH" || type == "how") return AnswerDomain::kAttribute;
  throw OracleError("unrecognized question template '" + type + "'");
}

std::vector<std::string> domain_renderings(AnswerDomain d) {
  std::vector<std::string> out;
  switch (d) {
    case AnswerDomain::kObject:
      return object_words();
    case AnswerDomain::kLocation:
      return location_words();
    case AnswerDomain::kAttribute:
      return attribute_words();
    case AnswerDomain::kAction:
      return action_words();
    case AnswerDomain::kCount:
      return count_words();
    case AnswerDomain::kCause:
      for (const std::string& a : action_words()) out.push_back("because " + a);
      return out;
  }
  throw OracleError("bad answer domain");
}

}  // namespace

std::vector<int> oracle_answer_tokens(const FrameCodebook& cb,
                                      const Episode& ep, const QuestionSpec& q,
                                      const Vocab& vocab) {
  const std::string& type = q.type;
  std::string text;
  if (type == "TP") {
    const int f = first_frame_with_action(cb, ep, q.slot);
    if (f < 1) throw OracleError("TP: action has no preceding frame");
    text = object_words()[static_cast<std::size_t>(
        entry_at(cb, ep, f - 1).object)];
  } else if (type == "CW" || type == "why") {
    const int f = first_frame_with_object(cb, ep, q.slot);
    if (f < 1) throw OracleError("causal: object has no causing frame");
    text = "because " + action_words()[static_cast<std::size_t>(
                            entry_at(cb, ep, f - 1).action)];
  } else if (type == "DC") {
    const int n = count_object_frames(cb, ep, q.slot);
    text = count_words()[static_cast<std::size_t>(n)];
  } else if (type == "TC") {
    const int f = first_frame_with_location(cb, ep, q.slot);
    if (f < 0) throw OracleError("TC: location not present");
    text = action_words()[static_cast<std::size_t>(entry_at(cb, ep, f).action)];
  } else if (type == "DL" || type == "where") {
    const int f = first_frame_with_object(cb, ep, q.slot);
    if (f < 0) throw OracleError("DL: object not present");
    text = location_words()[static_cast<std::size_t>(
        entry_at(cb, ep, f).location)];
  } else if (type == "DO" || type == "what") {
    const int f = first_frame_with_location(cb, ep, q.slot);
    if (f < 0) throw OracleError("DO: location not present");
    text = object_words()[static_cast<std::size_t>(entry_at(cb, ep, f).object)];
  } else if (type == "TN") {
    const int f = first_frame_with_object(cb, ep, q.slot);
    if (f < 0) throw OracleError("TN: object not present");
    text = action_words()[static_cast<std::size_t>(entry_at(cb, ep, f).action)];
  } else if (type == "CH" || type == "how") {
    const int f = first_frame_with_object(cb, ep, q.slot);
    if (f < 0) throw OracleError("CH: object not present");
    text = attribute_words()[static_cast<std::size_t>(
        entry_at(cb, ep, f).attribute)];
  } else if (type == "who") {
    const int f = first_frame_with_action(cb, ep, q.slot);
    if (f < 0) throw OracleError("who: action not present");
    text = object_words()[static_cast<std::size_t>(entry_at(cb, ep, f).object)];
  } else {
    throw OracleError("unrecognized question template '" + type + "'");
  }
  return vocab.tokenize(text);
}

int oracle_answer(const FrameCodebook& cb, const Episode& ep,
                  const QuestionSpec& q,
                  const std::vector<std::vector<int>>& choices,
                  const Vocab& vocab) {
  const std::vector<int> answer = oracle_answer_tokens(cb, ep, q, vocab);
  int found = -1;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i] == answer) {
      if (found >= 0)
        throw OracleError("multiple choices match the oracle answer");
      found = static_cast<int>(i);
    }
  }
  if (found < 0) throw OracleError("no choice matches the oracle answer");
  return found;
}

std::string question_regex(const std::string& type) {
  auto alternation = [](const std::vector<std::string>& words) {
    std::string out = "(";
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out += "|";
      out += words[i];
    }
    return out + ")";
  };
  const std::string slot = alternation(slot_domain(type));
  if (type == "TP") return "^what was before the action " + slot + " \\?$";
  if (type == "CW" || type == "why")
    return "^why did the " + slot + " appear \\?$";
  if (type == "DC")
    return "^how many times did the " + slot + " appear \\?$";
  if (type == "TC") return "^what action was at the " + slot + " \\?$";
  if (type == "DL" || type == "where")
    return "^where was the " + slot + " \\?$";
  if (type == "DO" || type == "what")
    return "^what was at the " + slot + " \\?$";
  if (type == "TN") return "^what did the " + slot + " do \\?$";
  if (type == "CH" || type == "how")
    return "^how did the " + slot + " look \\?$";
  if (type == "who") return "^who did the action " + slot + " \\?$";
  throw OracleError("unrecognized question template '" + type + "'");
}

namespace {

Episode generate_episode(const SuiteConfig& cfg, const FrameCodebook& cb,
                         Rng& rng) {
  Episode ep;
  ep.frame_ids.resize(static_cast<std::size_t>(cfg.num_frames));
  ep.frame_ids[0] = rng.uniform_int(0, cb.size() - 1);
  for (int i = 1; i < cfg.num_frames; ++i) {
    const bool jump = rng.uniform() < cfg.transition_noise;
    ep.frame_ids[static_cast<std::size_t>(i)] =
        jump ? rng.uniform_int(0, cb.size() - 1)
             : cb.successors[static_cast<std::size_t>(
                   ep.frame_ids[static_cast<std::size_t>(i - 1)])];
  }
  ep.features = Mat(cfg.num_frames, cfg.feat_dim);
  for (int i = 0; i < cfg.num_frames; ++i)
    for (int j = 0; j < cfg.feat_dim; ++j)
      ep.features(i, j) =
          cb.vectors(ep.frame_ids[static_cast<std::size_t>(i)], j) +
          cfg.noise_sigma * rng.normal();
  return ep;
}

// Realizes one question of `type` over the episode, or returns false when no
// slot satisfies the precondition.
bool realize_question(const std::string& type, const FrameCodebook& cb,
                      const Episode& ep, const Vocab& vocab, Rng& rng,
                      QuestionSpec& out, bool present_only = false) {
  const std::vector<int> cands = slot_candidates(type, cb, ep, present_only);
  if (cands.empty()) return false;
  out.type = type;
  out.slot = cands[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
  out.tokens = vocab.tokenize(render_question(
      type, slot_domain(type)[static_cast<std::size_t>(out.slot)]));
  return true;
}

Sample generate_sample(const SuiteConfig& cfg, const FrameCodebook& cb,
                       const Vocab& vocab, const std::string& type,
                       int task_id, int sample_id, Rng rng) {
  Sample s;
  s.sample_id = sample_id;
  s.task_id = task_id;
  try {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 256)
        throw GenerationError("could not realize a '" + type +
                              "' question after 256 episodes");
      s.episode = generate_episode(cfg, cb, rng);
      if (realize_question(type, cb, s.episode, vocab, rng, s.question)) break;
    }

    s.answer_tokens =
        oracle_answer_tokens(cb, s.episode, s.question, vocab);
    const std::vector<std::string> pool =
        domain_renderings(answer_domain(type));
    std::vector<std::vector<int>> distractors;
    for (const std::string& text : pool) {
      std::vector<int> toks = vocab.tokenize(text);
      if (toks != s.answer_tokens) distractors.push_back(std::move(toks));
    }
    if (static_cast<int>(distractors.size()) < cfg.choices_per_question - 1)
      throw GenerationError("answer domain for '" + type +
                            "' is smaller than the choice count");
    rng.shuffle(distractors);
    distractors.resize(static_cast<std::size_t>(cfg.choices_per_question - 1));
    s.choices = std::move(distractors);
    s.choices.push_back(s.answer_tokens);
    rng.shuffle(s.choices);
    s.correct_choice = oracle_answer(cb, s.episode, s.question, s.choices,
                                     vocab);

    Rng neg_rng = rng.fork(0x6E65ULL);
    s.negatives = sample_negative_questions(cb, s.episode, type, cfg.family,
                                            cfg.negatives_per_sample,
                                            sample_id, vocab, neg_rng);
  } catch (const VocabError& e) {
    throw GenerationError(std::string("vocabulary overflow while rendering: ") +
                          e.what());
  }
  return s;
}

}  // namespace

Sample generate_extra_sample(const SuiteConfig& cfg, const FrameCodebook& cb,
                             const Vocab& vocab, const std::string& type,
                             int task_id, int sample_id, Rng rng) {
  return generate_sample(cfg, cb, vocab, type, task_id, sample_id, rng);
}

std::vector<NegativeQuestion> sample_negative_questions(
    const FrameCodebook& codebook, const Episode& episode,
    const std::string& current_type, const std::string& family, int count,
    int source_sample_id, const Vocab& vocab, Rng& rng) {
  if (count < 1)
    throw ContractError("sample_negative_questions: count must be >= 1");
  std::vector<std::string> others;
  for (const std::string& t : question_types(family))
    if (t != current_type) others.push_back(t);
  if (others.empty())
    throw ContractError("no other question type exists for negatives");

  rng.shuffle(others);
  std::vector<NegativeQuestion> out;
  std::size_t cursor = 0;
  while (static_cast<int>(out.size()) < count) {
    const std::string& type = others[cursor % others.size()];
    ++cursor;
    QuestionSpec q;
    if (!realize_question(type, codebook, episode, vocab, rng, q,
                          /*present_only=*/true)) {
      if (cursor > others.size() * 4)
        throw GenerationError("no negative-question template realizable");
      continue;
    }
    NegativeQuestion neg;
    neg.type = type;
    neg.tokens = q.tokens;
    neg.source_sample_id = source_sample_id;
    neg.templated = true;
    out.push_back(std::move(neg));
  }
  return out;
}

Suite build_suite(const SuiteConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Suite suite;
  suite.config = cfg;
  suite.seed = seed;
  suite.vocab = Vocab::standard();

  Rng root(seed);
  Rng cb_rng = root.fork(0xC0DEB00CULL);
  suite.codebook = build_codebook(cfg, cb_rng);

  const std::vector<std::string>& types = question_types(cfg.family);
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    Task task;
    task.id = static_cast<int>(ti);
    task.question_type = types[ti];
    for (int split = 0; split < 2; ++split) {
      const int n = split == 0 ? cfg.train_per_task : cfg.eval_per_task;
      std::vector<Sample>& dst = split == 0 ? task.train : task.eval;
      for (int i = 0; i < n; ++i) {
        const int sample_id = static_cast<int>(ti) * 1000000 +
                              split * 500000 + i;
        dst.push_back(generate_sample(
            cfg, suite.codebook, suite.vocab, types[ti], task.id, sample_id,
            root.fork(static_cast<std::uint64_t>(sample_id) + 1)));
      }
    }
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

const Task& Suite::task_by_type(const std::string& type) const {
  for (const Task& t : tasks)
    if (t.question_type == type) return t;
  throw ConfigError("no task of type '" + type + "' in the suite");
}

}  // namespace colpro
