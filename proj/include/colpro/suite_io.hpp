#pragma once

#include <string>

#include "colpro/task_suite.hpp"

namespace colpro {

/// Canonical structured-text form ("colpro-suite v1" header line). Byte
/// stable for a given suite; the suite digest is the digest of this string.
std::string serialize_suite(const Suite& suite);
Suite parse_suite(const std::string& text);

void save_suite(const Suite& suite, const std::string& path);
Suite load_suite(const std::string& path);

}  // namespace colpro
