#include "colpro/suite_io.hpp"

#include <fstream>
#include <sstream>

#include "colpro/digest.hpp"
#include "colpro/errors.hpp"
#include "colpro/textio.hpp"

namespace colpro {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("short write to '" + path + "'");
}

namespace {

constexpr const char* kSuiteHeader = "colpro-suite v1";

void emit_sample(std::ostringstream& os, const Sample& s) {
  os << "sample " << s.task_id << " " << s.sample_id << "\n";
  os << "frames =";
  for (int f : s.episode.frame_ids) os << " " << f;
  os << "\nfeat =";
  for (Index i = 0; i < s.episode.features.rows(); ++i)
    for (Index j = 0; j < s.episode.features.cols(); ++j)
      os << " " << fmt_real(s.episode.features(i, j));
  os << "\nqtype = " << s.question.type << "\nqslot = " << s.question.slot
     << "\nqtok =";
  for (int t : s.question.tokens) os << " " << t;
  os << "\n";
  for (const auto& c : s.choices) {
    os << "choice =";
    for (int t : c) os << " " << t;
    os << "\n";
  }
  os << "correct = " << s.correct_choice << "\n";
  for (const auto& n : s.negatives) {
    os << "neg = " << n.type << " " << n.source_sample_id << " "
       << (n.templated ? 1 : 0);
    for (int t : n.tokens) os << " " << t;
    os << "\n";
  }
}

}  // namespace

std::string serialize_suite(const Suite& suite) {
  std::ostringstream os;
  os << kSuiteHeader << "\n";
  const SuiteConfig& c = suite.config;
  os << "family = " << c.family << "\n";
  os << "seed = " << suite.seed << "\n";
  os << "train_per_task = " << c.train_per_task << "\n";
  os << "eval_per_task = " << c.eval_per_task << "\n";
  os << "num_frames = " << c.num_frames << "\n";
  os << "feat_dim = " << c.feat_dim << "\n";
  os << "codebook_size = " << c.codebook_size << "\n";
  os << "noise_sigma = " << fmt_real(c.noise_sigma) << "\n";
  os << "transition_noise = " << fmt_real(c.transition_noise) << "\n";
  os << "negatives_per_sample = " << c.negatives_per_sample << "\n";
  os << "choices_per_question = " << c.choices_per_question << "\n";
  os << "vocab =";
  for (const std::string& w : suite.vocab.words()) os << " " << w;
  os << "\n";
  for (int k = 0; k < suite.codebook.size(); ++k) {
    const auto& e = suite.codebook.entries[static_cast<std::size_t>(k)];
    os << "codebook " << k << " = " << e.object << " " << e.location << " "
       << e.attribute << " " << e.action << " "
       << suite.codebook.successors[static_cast<std::size_t>(k)];
    for (Index j = 0; j < suite.codebook.vectors.cols(); ++j)
      os << " " << fmt_real(suite.codebook.vectors(k, j));
    os << "\n";
  }
  for (const Task& t : suite.tasks) {
    os << "task " << t.id << " = " << t.question_type << "\n";
    os << "split train " << t.train.size() << "\n";
    for (const Sample& s : t.train) emit_sample(os, s);
    os << "split eval " << t.eval.size() << "\n";
    for (const Sample& s : t.eval) emit_sample(os, s);
  }
  return os.str();
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::string& text) : text_(text) {}

  bool next(std::string& line) {
    if (pos_ >= text_.size()) return false;
    std::size_t e = text_.find('\n', pos_);
    if (e == std::string::npos) e = text_.size();
    line = text_.substr(pos_, e - pos_);
    pos_ = e + 1;
    ++lineno_;
    return true;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw IoError("suite parse error at line " + std::to_string(lineno_) +
                  ": " + why);
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int lineno_ = 0;
};

std::string expect_value(LineReader& r, const std::string& key) {
  std::string line, k, v;
  if (!r.next(line)) r.fail("unexpected end of file, wanted '" + key + "'");
  if (!split_kv(line, k, v) || k != key)
    r.fail("expected '" + key + " = ...', got '" + line + "'");
  return v;
}

Sample parse_sample(LineReader& r, const std::string& first_line,
                    const Suite& suite) {
  Sample s;
  const auto head = split_ws(first_line);
  if (head.size() != 3 || head[0] != "sample")
    r.fail("expected sample header, got '" + first_line + "'");
  s.task_id = static_cast<int>(parse_int(head[1]));
  s.sample_id = static_cast<int>(parse_int(head[2]));

  for (const std::string& f : split_ws(expect_value(r, "frames")))
    s.episode.frame_ids.push_back(static_cast<int>(parse_int(f)));
  const auto feat = split_ws(expect_value(r, "feat"));
  const int nf = suite.config.num_frames, fd = suite.config.feat_dim;
  if (static_cast<int>(feat.size()) != nf * fd)
    r.fail("feature count mismatch");
  s.episode.features = Mat(nf, fd);
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < fd; ++j)
      s.episode.features(i, j) =
          parse_real(feat[static_cast<std::size_t>(i * fd + j)]);
  s.question.type = expect_value(r, "qtype");
  s.question.slot = static_cast<int>(parse_int(expect_value(r, "qslot")));
  for (const std::string& t : split_ws(expect_value(r, "qtok")))
    s.question.tokens.push_back(static_cast<int>(parse_int(t)));
  for (int c = 0; c < suite.config.choices_per_question; ++c) {
    std::vector<int> toks;
    for (const std::string& t : split_ws(expect_value(r, "choice")))
      toks.push_back(static_cast<int>(parse_int(t)));
    s.choices.push_back(std::move(toks));
  }
  s.correct_choice = static_cast<int>(parse_int(expect_value(r, "correct")));
  s.answer_tokens = s.choices[static_cast<std::size_t>(s.correct_choice)];
  for (int n = 0; n < suite.config.negatives_per_sample; ++n) {
    const auto parts = split_ws(expect_value(r, "neg"));
    if (parts.size() < 4) r.fail("malformed negative question");
    NegativeQuestion neg;
    neg.type = parts[0];
    neg.source_sample_id = static_cast<int>(parse_int(parts[1]));
    neg.templated = parse_int(parts[2]) != 0;
    for (std::size_t i = 3; i < parts.size(); ++i)
      neg.tokens.push_back(static_cast<int>(parse_int(parts[i])));
    s.negatives.push_back(std::move(neg));
  }
  return s;
}

}  // namespace

Suite parse_suite(const std::string& text) {
  LineReader r(text);
  std::string line;
  if (!r.next(line) || line != kSuiteHeader)
    r.fail(std::string("missing header '") + kSuiteHeader + "'");

  Suite suite;
  SuiteConfig& c = suite.config;
  c.family = expect_value(r, "family");
  suite.seed = parse_uint(expect_value(r, "seed"));
  c.train_per_task = static_cast<int>(parse_int(expect_value(r, "train_per_task")));
  c.eval_per_task = static_cast<int>(parse_int(expect_value(r, "eval_per_task")));
  c.num_frames = static_cast<int>(parse_int(expect_value(r, "num_frames")));
  c.feat_dim = static_cast<int>(parse_int(expect_value(r, "feat_dim")));
  c.codebook_size = static_cast<int>(parse_int(expect_value(r, "codebook_size")));
  c.noise_sigma = parse_real(expect_value(r, "noise_sigma"));
  c.transition_noise = parse_real(expect_value(r, "transition_noise"));
  c.negatives_per_sample =
      static_cast<int>(parse_int(expect_value(r, "negatives_per_sample")));
  c.choices_per_question =
      static_cast<int>(parse_int(expect_value(r, "choices_per_question")));
  suite.vocab = Vocab::from_words(split_ws(expect_value(r, "vocab")));

  suite.codebook.vectors = Mat(c.codebook_size, c.feat_dim);
  for (int k = 0; k < c.codebook_size; ++k) {
    if (!r.next(line)) r.fail("missing codebook entry");
    std::string key, value;
    if (!split_kv(line, key, value) ||
        split_ws(key) != std::vector<std::string>{"codebook",
                                                  std::to_string(k)})
      r.fail("expected codebook entry " + std::to_string(k));
    const auto parts = split_ws(value);
    if (static_cast<int>(parts.size()) != 5 + c.feat_dim)
      r.fail("codebook entry width mismatch");
    FrameCodebook::Entry e{};
    e.object = static_cast<int>(parse_int(parts[0]));
    e.location = static_cast<int>(parse_int(parts[1]));
    e.attribute = static_cast<int>(parse_int(parts[2]));
    e.action = static_cast<int>(parse_int(parts[3]));
    suite.codebook.entries.push_back(e);
    suite.codebook.successors.push_back(static_cast<int>(parse_int(parts[4])));
    for (int j = 0; j < c.feat_dim; ++j)
      suite.codebook.vectors(k, j) =
          parse_real(parts[static_cast<std::size_t>(5 + j)]);
  }

  const auto& types = question_types(c.family);
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    Task task;
    const auto head = split_ws(expect_value(r, "task " + std::to_string(ti)));
    if (head.size() != 1) r.fail("malformed task header");
    task.id = static_cast<int>(ti);
    task.question_type = head[0];
    for (int split = 0; split < 2; ++split) {
      if (!r.next(line)) r.fail("missing split header");
      const auto sp = split_ws(line);
      if (sp.size() != 3 || sp[0] != "split") r.fail("malformed split header");
      const int n = static_cast<int>(parse_int(sp[2]));
      std::vector<Sample>& dst = split == 0 ? task.train : task.eval;
      for (int i = 0; i < n; ++i) {
        if (!r.next(line)) r.fail("missing sample");
        dst.push_back(parse_sample(r, line, suite));
      }
    }
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

void save_suite(const Suite& suite, const std::string& path) {
  write_text_file(path, serialize_suite(suite));
}

Suite load_suite(const std::string& path) {
  return parse_suite(read_text_file(path));
}

std::uint64_t Suite::digest() const { return digest_of(serialize_suite(*this)); }

}  // namespace colpro
