#include "colpro/report_io.hpp"

#include <filesystem>
#include <sstream>

#include "colpro/digest.hpp"
#include "colpro/errors.hpp"
#include "colpro/textio.hpp"

namespace colpro {

namespace {

constexpr const char* kReportHeader = "colpro-report v1";
constexpr const char* kTableHeader = "colpro-table v1";

std::string join_csv(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ",";
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string serialize_report(const RunReport& r) {
  std::ostringstream os;
  os << kReportHeader << "\n";
  os << "seed = " << r.seed << "\n";
  os << "suite_digest = " << digest_to_hex(r.suite_digest) << "\n";
  os << "config_digest = " << digest_to_hex(r.config_digest) << "\n";
  os << "task_order = " << join_csv(r.task_order) << "\n";
  os << "trainable_params = " << r.trainable_params << "\n";
  os << "backbone_digest_before = " << digest_to_hex(r.backbone_digest_before)
     << "\n";
  os << "backbone_digest_after = " << digest_to_hex(r.backbone_digest_after)
     << "\n";
  os << "audit_ok = " << (r.audit_ok ? "true" : "false") << "\n";
  os << "audit_stages = " << r.audit.size() << "\n";
  for (const auto& st : r.audit) {
    os << "audit = " << st.stage << " " << st.task_id << " "
       << st.train_accesses << " " << st.eval_accesses << " "
       << st.train_sample_count;
    for (int tid : st.train_task_ids) os << " " << tid;
    os << "\n";
  }
  os << "matrix_stages = " << r.matrix.stages() << "\n";
  for (int t = 0; t < r.matrix.stages(); ++t) {
    os << "R " << t << " =";
    for (double v : r.matrix.rows[static_cast<std::size_t>(t)])
      os << " " << fmt_real(v);
    os << "\n";
  }
  os << "avg_acc = " << fmt_real(r.avg_acc_value) << "\n";
  os << "avg_fog = " << fmt_real(r.avg_fog_value) << "\n";
  os << "curve_stages = " << r.loss_curves.size() << "\n";
  for (std::size_t s = 0; s < r.loss_curves.size(); ++s)
    for (std::size_t e = 0; e < r.loss_curves[s].size(); ++e) {
      const LossBreakdown& b = r.loss_curves[s][e];
      os << "loss " << s << " " << e << " = " << fmt_real(b.l_a) << " "
         << fmt_real(b.l_q_gen) << " " << fmt_real(b.l_q_neg) << " "
         << fmt_real(b.l_v_dyn) << " " << fmt_real(b.l_v_con) << " "
         << fmt_real(b.total) << "\n";
    }
  const std::string body = os.str();
  return body + "report_digest = " + digest_to_hex(digest_of(body)) + "\n";
}

namespace {

class ReportReader {
 public:
  explicit ReportReader(const std::string& text) : text_(text) {}

  bool next(std::string& line) {
    if (pos_ >= text_.size()) return false;
    std::size_t e = text_.find('\n', pos_);
    if (e == std::string::npos) e = text_.size();
    line = text_.substr(pos_, e - pos_);
    pos_ = e + 1;
    ++lineno_;
    return true;
  }

  std::string value(const std::string& key) {
    std::string line, k, v;
    if (!next(line)) fail("unexpected end, wanted '" + key + "'");
    if (!split_kv(line, k, v) || k != key)
      fail("expected '" + key + "', got '" + line + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw IoError("report parse error at line " + std::to_string(lineno_) +
                  ": " + why);
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int lineno_ = 0;
};

}  // namespace

RunReport parse_report(const std::string& text) {
  ReportReader r(text);
  std::string line;
  if (!r.next(line) || line != kReportHeader)
    r.fail(std::string("missing header '") + kReportHeader + "'");

  RunReport out;
  out.seed = parse_uint(r.value("seed"));
  out.suite_digest = digest_from_hex(r.value("suite_digest"));
  out.config_digest = digest_from_hex(r.value("config_digest"));
  {
    std::string order = r.value("task_order");
    std::string cur;
    for (char c : order + ",") {
      if (c == ',') {
        if (!cur.empty()) out.task_order.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
  }
  out.trainable_params = parse_int(r.value("trainable_params"));
  out.backbone_digest_before =
      digest_from_hex(r.value("backbone_digest_before"));
  out.backbone_digest_after =
      digest_from_hex(r.value("backbone_digest_after"));
  out.audit_ok = parse_bool(r.value("audit_ok"));
  const long long n_audit = parse_int(r.value("audit_stages"));
  for (long long i = 0; i < n_audit; ++i) {
    const auto parts = split_ws(r.value("audit"));
    if (parts.size() < 5) r.fail("malformed audit line");
    DataProvider::StageAccess st;
    st.stage = static_cast<int>(parse_int(parts[0]));
    st.task_id = static_cast<int>(parse_int(parts[1]));
    st.train_accesses = static_cast<std::size_t>(parse_int(parts[2]));
    st.eval_accesses = static_cast<std::size_t>(parse_int(parts[3]));
    st.train_sample_count = static_cast<std::size_t>(parse_int(parts[4]));
    for (std::size_t j = 5; j < parts.size(); ++j)
      st.train_task_ids.insert(static_cast<int>(parse_int(parts[j])));
    out.audit.push_back(std::move(st));
  }
  const long long stages = parse_int(r.value("matrix_stages"));
  for (long long t = 0; t < stages; ++t) {
    const auto vals = split_ws(r.value("R " + std::to_string(t)));
    std::vector<double> row;
    for (const std::string& v : vals) row.push_back(parse_real(v));
    out.matrix.rows.push_back(std::move(row));
  }
  out.avg_acc_value = parse_real(r.value("avg_acc"));
  out.avg_fog_value = parse_real(r.value("avg_fog"));
  const long long curve_stages = parse_int(r.value("curve_stages"));
  out.loss_curves.resize(static_cast<std::size_t>(curve_stages));
  // loss lines run until the digest line
  std::string pending;
  while (r.next(pending)) {
    std::string k, v;
    if (!split_kv(pending, k, v)) r.fail("unparseable line '" + pending + "'");
    if (k == "report_digest") {
      const std::string body =
          text.substr(0, text.rfind("report_digest = "));
      if (digest_from_hex(v) != digest_of(body))
        throw IoError("report digest mismatch: file is corrupt or edited");
      return out;
    }
    const auto head = split_ws(k);
    if (head.size() != 3 || head[0] != "loss") r.fail("expected a loss line");
    const auto vals = split_ws(v);
    if (vals.size() != 6) r.fail("loss line needs 6 values");
    LossBreakdown b;
    b.l_a = parse_real(vals[0]);
    b.l_q_gen = parse_real(vals[1]);
    b.l_q_neg = parse_real(vals[2]);
    b.l_v_dyn = parse_real(vals[3]);
    b.l_v_con = parse_real(vals[4]);
    b.total = parse_real(vals[5]);
    const std::size_t s = static_cast<std::size_t>(parse_int(head[1]));
    if (s >= out.loss_curves.size()) r.fail("loss stage out of range");
    out.loss_curves[s].push_back(b);
  }
  r.fail("missing report_digest line");
}

std::string matrix_csv(const AccuracyMatrix& m) {
  std::ostringstream os;
  for (const auto& row : m.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) os << ",";
      os << fmt_real(row[j]);
    }
    os << "\n";
  }
  return os.str();
}

std::string curves_csv(const RunReport& r) {
  std::ostringstream os;
  for (int t = 0; t < r.matrix.stages(); ++t)
    for (std::size_t j = 0; j <= static_cast<std::size_t>(t); ++j)
      os << t << "," << r.task_order[j] << ","
         << fmt_real(r.matrix.rows[static_cast<std::size_t>(t)][j]) << "\n";
  return os.str();
}

std::string summary_line(const RunReport& r) {
  return "avg_acc=" + fmt_real(r.avg_acc_value) +
         ", avg_fog=" + fmt_real(r.avg_fog_value);
}

ReportPaths emit_report(const RunReport& report, const std::string& out_dir,
                        const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");
  ReportPaths paths;
  paths.report = out_dir + "/" + stem + "_report.txt";
  paths.matrix = out_dir + "/" + stem + "_matrix.csv";
  paths.curves = out_dir + "/" + stem + "_curves.csv";
  write_text_file(paths.report, serialize_report(report));
  write_text_file(paths.matrix, matrix_csv(report.matrix));
  write_text_file(paths.curves, curves_csv(report));
  return paths;
}

std::string serialize_study(const StudyTable& table) {
  std::ostringstream os;
  os << kTableHeader << "\n";
  os << "kind = " << table.kind << "\n";
  os << "columns = " << join_csv(table.columns) << "\n";
  os << "duplicates_removed = " << table.duplicates_removed << "\n";
  os << "rows = " << table.rows.size() << "\n";
  for (const StudyRow& row : table.rows) {
    os << "row " << row.label << " |";
    for (const auto& [col, val] : row.cells) os << " " << col << "=" << val;
    os << "\n";
  }
  return os.str();
}

std::string emit_study(const StudyTable& table, const std::string& out_dir,
                       const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");
  const std::string table_path = out_dir + "/" + stem + "_table.txt";
  write_text_file(table_path, serialize_study(table));
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    emit_report(table.rows[i].report, out_dir,
                stem + "_cell" + std::to_string(i));
  return table_path;
}

}  // namespace colpro
