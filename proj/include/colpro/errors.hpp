#pragma once

#include <stdexcept>
#include <string>

namespace colpro {

// Exception classes map 1:1 onto the documented CLI exit codes below.

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Violated call contract (bad argument combination, missing input, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Any breach of the sequential-training data isolation or the frozen-backbone
/// guarantee. Always fatal.
struct AuditError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Process exit codes emitted by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,    // unknown flag / subcommand / malformed command line
  kExitConfig = 3,   // bad config key, value, or invalid model geometry
  kExitAudit = 4,    // rehearsal-free or frozen-backbone violation
  kExitNumeric = 5,  // NaN gradients, failed gradient check, numeric invariant
  kExitIo = 6,       // unreadable/unwritable files
};

}  // namespace colpro
