#include <regex>
#include <set>
#include <string>
#include <vector>

#include "colpro/digest.hpp"
#include "colpro/errors.hpp"
#include "colpro/suite_io.hpp"
#include "colpro/task_suite.hpp"
#include "colpro/textio.hpp"
#include "doctest.h"

using namespace colpro;

namespace {

SuiteConfig small_config() {
  SuiteConfig cfg;
  cfg.train_per_task = 12;
  cfg.eval_per_task = 6;
  return cfg;
}

// Independent frame-scan oracle: collects every occurrence list first, then
// answers from those lists, instead of the library's first-hit early returns.
std::vector<int> occurrences_of_object(const FrameCodebook& cb,
                                       const Episode& ep, int obj) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ep.frame_ids.size()); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[static_cast<std::size_t>(i)])]
            .object == obj)
      out.push_back(i);
  return out;
}

std::vector<int> occurrences_of_location(const FrameCodebook& cb,
                                         const Episode& ep, int loc) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ep.frame_ids.size()); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[static_cast<std::size_t>(i)])]
            .location == loc)
      out.push_back(i);
  return out;
}

std::vector<int> occurrences_of_action(const FrameCodebook& cb,
                                       const Episode& ep, int act) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ep.frame_ids.size()); ++i)
    if (cb.entries[static_cast<std::size_t>(ep.frame_ids[static_cast<std::size_t>(i)])]
            .action == act)
      out.push_back(i);
  return out;
}

const FrameCodebook::Entry& frame_entry(const FrameCodebook& cb,
                                        const Episode& ep, int frame) {
  return cb.entries[static_cast<std::size_t>(
      ep.frame_ids[static_cast<std::size_t>(frame)])];
}

std::string brute_force_answer(const FrameCodebook& cb, const Episode& ep,
                               const QuestionSpec& q) {
  if (q.type == "TP") {
    const auto occ = occurrences_of_action(cb, ep, q.slot);
    return object_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front() - 1).object)];
  }
  if (q.type == "CW" || q.type == "why") {
    const auto occ = occurrences_of_object(cb, ep, q.slot);
    return "because " + action_words()[static_cast<std::size_t>(
                            frame_entry(cb, ep, occ.front() - 1).action)];
  }
  if (q.type == "DC") {
    const auto occ = occurrences_of_object(cb, ep, q.slot);
    return count_words()[occ.size()];
  }
  if (q.type == "TC") {
    const auto occ = occurrences_of_location(cb, ep, q.slot);
    return action_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).action)];
  }
  if (q.type == "DL" || q.type == "where") {
    const auto occ = occurrences_of_object(cb, ep, q.slot);
    return location_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).location)];
  }
  if (q.type == "DO" || q.type == "what") {
    const auto occ = occurrences_of_location(cb, ep, q.slot);
    return object_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).object)];
  }
  if (q.type == "TN") {
    const auto occ = occurrences_of_object(cb, ep, q.slot);
    return action_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).action)];
  }
  if (q.type == "CH" || q.type == "how") {
    const auto occ = occurrences_of_object(cb, ep, q.slot);
    return attribute_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).attribute)];
  }
  if (q.type == "who") {
    const auto occ = occurrences_of_action(cb, ep, q.slot);
    return object_words()[static_cast<std::size_t>(
        frame_entry(cb, ep, occ.front()).object)];
  }
  FAIL("unknown type in brute force oracle");
  return "";
}

}  // namespace

TEST_CASE("same seed builds byte-identical suites") {
  const Suite a = build_suite(small_config(), 99);
  const Suite b = build_suite(small_config(), 99);
  CHECK(serialize_suite(a) == serialize_suite(b));
  CHECK(a.digest() == b.digest());

  const Suite c = build_suite(small_config(), 100);
  CHECK(c.digest() != a.digest());
}

TEST_CASE("default config yields 8 tasks with the contracted counts") {
  SuiteConfig cfg;  // defaults: 500 train / 200 eval
  cfg.train_per_task = 40;  // count contract scaled for test time
  cfg.eval_per_task = 16;
  const Suite s = build_suite(cfg, 5);
  REQUIRE(s.tasks.size() == 8);
  std::set<int> all_ids;
  for (const Task& t : s.tasks) {
    CHECK(t.train.size() == 40);
    CHECK(t.eval.size() == 16);
    for (const auto* split : {&t.train, &t.eval})
      for (const Sample& smp : *split) {
        CHECK(all_ids.insert(smp.sample_id).second);  // disjoint sample sets
        CHECK(smp.task_id == t.id);
      }
  }
  SUBCASE("default sizes are the documented 500/200") {
    CHECK(SuiteConfig{}.train_per_task == 500);
    CHECK(SuiteConfig{}.eval_per_task == 200);
  }
}

TEST_CASE("codebook archetypes are unit-norm and distinguishable") {
  Rng rng(17);
  const FrameCodebook cb = build_codebook(small_config(), rng);
  for (int i = 0; i < cb.size(); ++i) {
    CHECK(cb.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < i; ++j)
      CHECK(cb.vectors.row(i).dot(cb.vectors.row(j)) < 0.95);
  }
}

TEST_CASE("DC count answers match the shown frames") {
  const Suite s = build_suite(small_config(), 7);
  const Task& dc = s.task_by_type("DC");
  const Vocab& v = s.vocab;
  bool saw_three = false;
  for (const Sample& smp : dc.train) {
    const int count = static_cast<int>(
        occurrences_of_object(s.codebook, smp.episode, smp.question.slot)
            .size());
    CHECK(v.detokenize(smp.answer_tokens) ==
          count_words()[static_cast<std::size_t>(count)]);
    if (count == 3) saw_three = true;
  }
  // the worked example: an object shown in 3 frames reads "three"
  if (!saw_three) {
    MESSAGE("no count-3 DC sample in this seed; covered by identity check");
  }
}

TEST_CASE("TP and zero-count DC worked examples") {
  const Suite s = build_suite(small_config(), 3);
  const FrameCodebook& cb = s.codebook;

  // Build an episode [x, a, y] by hand: slot action is the one at frame 1.
  Episode ep;
  ep.frame_ids = {0, 1, 2};
  ep.features = Mat::Zero(3, s.config.feat_dim);
  QuestionSpec q;
  q.type = "TP";
  q.slot = cb.entries[1].action;
  // precondition: that action must not already occur at frame 0
  if (cb.entries[0].action == cb.entries[1].action) {
    ep.frame_ids = {2, 1, 0};
    if (cb.entries[2].action == cb.entries[1].action) return;  // seed quirk
  }
  const auto tokens = oracle_answer_tokens(cb, ep, q, s.vocab);
  const int prev_obj =
      cb.entries[static_cast<std::size_t>(ep.frame_ids[0])].object;
  CHECK(s.vocab.detokenize(tokens) ==
        object_words()[static_cast<std::size_t>(prev_obj)]);

  // DC over an episode with zero occurrences answers "zero".
  int absent_obj = -1;
  for (int o = 0; o < static_cast<int>(object_words().size()); ++o) {
    bool present = false;
    for (int f : ep.frame_ids)
      if (cb.entries[static_cast<std::size_t>(f)].object == o) present = true;
    if (!present) {
      absent_obj = o;
      break;
    }
  }
  REQUIRE(absent_obj >= 0);
  QuestionSpec qdc;
  qdc.type = "DC";
  qdc.slot = absent_obj;
  CHECK(s.vocab.detokenize(oracle_answer_tokens(cb, ep, qdc, s.vocab)) ==
        "zero");
}

TEST_CASE("oracle agrees with an independent frame scan on 1000 cases") {
  const Suite s = build_suite(small_config(), 21);
  int checked = 0;
  for (const Task& t : s.tasks)
    for (const auto* split : {&t.train, &t.eval})
      for (const Sample& smp : *split) {
        CHECK(s.vocab.detokenize(smp.answer_tokens) ==
              brute_force_answer(s.codebook, smp.episode, smp.question));
        CHECK(oracle_answer(s.codebook, smp.episode, smp.question, smp.choices,
                            s.vocab) == smp.correct_choice);
        ++checked;
      }
  CHECK(checked >= 144);

  // Top up to >= 1000 cases with free-standing episode/template pairs.
  Rng rng(1234);
  for (int extra = checked; extra < 1000; ++extra) {
    Episode ep;
    ep.frame_ids.resize(static_cast<std::size_t>(s.config.num_frames));
    for (int& f : ep.frame_ids) f = rng.uniform_int(0, s.codebook.size() - 1);
    ep.features = Mat::Zero(s.config.num_frames, s.config.feat_dim);
    const auto& types = question_types("next");
    const std::string type =
        types[static_cast<std::size_t>(rng.uniform_int(0, 7))];
    Rng qrng = rng.fork(static_cast<std::uint64_t>(extra));
    const auto negs = sample_negative_questions(
        s.codebook, ep, type, "next", 1, -1, s.vocab, qrng);
    REQUIRE(negs.size() == 1);
    QuestionSpec q;
    q.type = negs[0].type;
    // recover the slot from the rendered text
    const auto words = split_ws(s.vocab.detokenize(negs[0].tokens));
    const auto& domain = [&]() -> const std::vector<std::string>& {
      if (q.type == "TP" || q.type == "who") return action_words();
      if (q.type == "TC" || q.type == "DO") return location_words();
      return object_words();
    }();
    for (std::size_t d = 0; d < domain.size(); ++d)
      for (const std::string& w : words)
        if (w == domain[d]) q.slot = static_cast<int>(d);
    REQUIRE(q.slot >= 0);
    CHECK(s.vocab.detokenize(oracle_answer_tokens(s.codebook, ep, q, s.vocab)) ==
          brute_force_answer(s.codebook, ep, q));
  }
}

TEST_CASE("negative questions exclude the task's own template and stay on episode") {
  const Suite s = build_suite(small_config(), 31);
  const Task& dc = s.task_by_type("DC");
  for (const Sample& smp : dc.train)
    for (const NegativeQuestion& n : smp.negatives) {
      CHECK(n.type != "DC");
      const std::string text = s.vocab.detokenize(n.tokens);
      CHECK(text.find("how many") == std::string::npos);
    }

  // Negatives for a CW task reference entities present in the episode.
  const Task& cw = s.task_by_type("CW");
  for (const Sample& smp : cw.train) {
    for (const NegativeQuestion& n : smp.negatives) {
      const std::string text = s.vocab.detokenize(n.tokens);
      const auto words = split_ws(text);
      // slot word is always the token before the trailing "?"-terminated tail
      bool mentions_present_entity = false;
      for (const std::string& w : words) {
        for (int o = 0; o < static_cast<int>(object_words().size()); ++o)
          if (w == object_words()[static_cast<std::size_t>(o)] &&
              !occurrences_of_object(s.codebook, smp.episode, o).empty())
            mentions_present_entity = true;
        for (int l = 0; l < static_cast<int>(location_words().size()); ++l)
          if (w == location_words()[static_cast<std::size_t>(l)] &&
              !occurrences_of_location(s.codebook, smp.episode, l).empty())
            mentions_present_entity = true;
        for (int a = 0; a < static_cast<int>(action_words().size()); ++a)
          if (w == action_words()[static_cast<std::size_t>(a)] &&
              !occurrences_of_action(s.codebook, smp.episode, a).empty())
            mentions_present_entity = true;
      }
      CHECK(mentions_present_entity);
    }
  }
}

TEST_CASE("negative sampling is deterministic and provenance-tagged") {
  const Suite s = build_suite(small_config(), 41);
  const Sample& smp = s.tasks[0].train[0];
  Rng r1(777), r2(777);
  const auto a = sample_negative_questions(s.codebook, smp.episode, "TP",
                                           "next", 2, smp.sample_id, s.vocab,
                                           r1);
  const auto b = sample_negative_questions(s.codebook, smp.episode, "TP",
                                           "next", 2, smp.sample_id, s.vocab,
                                           r2);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].type == b[i].type);
  }

  // Rehearsal-free sourcing: every stored negative is templated from its own
  // sample, never copied from another task's records.
  for (const Task& t : s.tasks)
    for (const Sample& sm : t.train)
      for (const NegativeQuestion& n : sm.negatives) {
        CHECK(n.templated);
        CHECK(n.source_sample_id == sm.sample_id);
      }

  Rng r3(7);
  CHECK_THROWS_AS(
      sample_negative_questions(s.codebook, smp.episode, "TP", "next", 0, 0,
                                s.vocab, r3),
      ContractError);
}

TEST_CASE("every question matches its type template") {
  const Suite s = build_suite(small_config(), 51);
  for (const Task& t : s.tasks) {
    const std::regex re(question_regex(t.question_type));
    for (const auto* split : {&t.train, &t.eval})
      for (const Sample& smp : *split)
        CHECK(std::regex_match(s.vocab.detokenize(smp.question.tokens), re));
  }
}

TEST_CASE("answer choices are sound") {
  const Suite s = build_suite(small_config(), 61);
  for (const Task& t : s.tasks)
    for (const auto* split : {&t.train, &t.eval})
      for (const Sample& smp : *split) {
        REQUIRE(smp.choices.size() == 5);
        CHECK(smp.correct_choice >= 0);
        CHECK(smp.correct_choice < 5);
        int matches = 0;
        for (const auto& c : smp.choices)
          if (c == smp.answer_tokens) ++matches;
        CHECK(matches == 1);
        std::set<std::vector<int>> uniq(smp.choices.begin(),
                                        smp.choices.end());
        CHECK(uniq.size() == 5);
      }
}

TEST_CASE("tokenizer round trips and rejects unknown words") {
  const Vocab v = Vocab::standard();
  Rng rng(71);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> ids;
    const int n = rng.uniform_int(0, 12);
    for (int i = 0; i < n; ++i) ids.push_back(rng.uniform_int(0, v.size() - 1));
    CHECK(v.tokenize(v.detokenize(ids)) == ids);
  }
  CHECK(v.tokenize("").empty());
  CHECK_THROWS_AS(v.tokenize("what was the zeppelin ?"), VocabError);
}

TEST_CASE("every template rendering fits the question budget") {
  constexpr std::size_t kQuestionBudget = 10;
  for (const std::string& family : {std::string("next"), std::string("drama")})
    for (const std::string& type : question_types(family)) {
      const Vocab v = Vocab::standard();
      const std::regex re(question_regex(type));
      // exhaustive scan over the slot domain
      std::vector<std::string> domain;
      if (type == "TP" || type == "who")
        domain = action_words();
      else if (type == "TC" || type == "DO" || type == "what")
        domain = location_words();
      else
        domain = object_words();
      for (const std::string& slot : domain) {
        std::string text;
        if (type == "TP")
          text = "what was before the action " + slot + " ?";
        else if (type == "CW" || type == "why")
          text = "why did the " + slot + " appear ?";
        else if (type == "DC")
          text = "how many times did the " + slot + " appear ?";
        else if (type == "TC")
          text = "what action was at the " + slot + " ?";
        else if (type == "DL" || type == "where")
          text = "where was the " + slot + " ?";
        else if (type == "DO" || type == "what")
          text = "what was at the " + slot + " ?";
        else if (type == "TN")
          text = "what did the " + slot + " do ?";
        else if (type == "CH" || type == "how")
          text = "how did the " + slot + " look ?";
        else if (type == "who")
          text = "who did the action " + slot + " ?";
        CHECK(v.tokenize(text).size() <= kQuestionBudget);
        CHECK(std::regex_match(text, re));
      }
    }
}

TEST_CASE("drama family builds 5 tasks") {
  SuiteConfig cfg = small_config();
  cfg.family = "drama";
  const Suite s = build_suite(cfg, 8);
  REQUIRE(s.tasks.size() == 5);
  CHECK(s.tasks[0].question_type == "what");
  CHECK(s.tasks[4].question_type == "why");
}

TEST_CASE("suite serialization round trips exactly") {
  const Suite s = build_suite(small_config(), 77);
  const std::string text = serialize_suite(s);
  const Suite back = parse_suite(text);
  CHECK(serialize_suite(back) == text);
  CHECK(back.digest() == s.digest());
}

TEST_CASE("suite config validation") {
  SuiteConfig cfg;
  cfg.family = "imagenet";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SuiteConfig{};
  cfg.train_per_task = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SuiteConfig{};
  cfg.num_frames = 11;  // would overflow the count-word domain
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
