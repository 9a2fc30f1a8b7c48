#pragma once

#include <string>

#include "colpro/harness.hpp"
#include "colpro/studies.hpp"

namespace colpro {

/// Canonical structured-text report ("colpro-report v1"). Deterministic for a
/// given run; the trailing report_digest line covers everything above it.
/// Wall-clock timings are deliberately not part of this text.
std::string serialize_report(const RunReport& report);
/// Strict parser; verifies the embedded digest.
RunReport parse_report(const std::string& text);

std::string matrix_csv(const AccuracyMatrix& m);
/// One "stage,task,accuracy" line per triangular entry (no header).
std::string curves_csv(const RunReport& report);
/// The one-line stdout summary; values match the report exactly.
std::string summary_line(const RunReport& report);

struct ReportPaths {
  std::string report, matrix, curves;
};

/// Writes report.txt / matrix.csv / curves.csv under out_dir (created if
/// missing), byte-deterministically.
ReportPaths emit_report(const RunReport& report, const std::string& out_dir,
                        const std::string& stem);

std::string serialize_study(const StudyTable& table);
/// Writes the study table plus one full report per row.
std::string emit_study(const StudyTable& table, const std::string& out_dir,
                       const std::string& stem);

}  // namespace colpro
