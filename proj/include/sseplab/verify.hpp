#pragma once
// The packaged acceptance suite: thirteen numbered criteria covering exact
// pathwise identities, scaling laws, limiting constants, distributional
// checks against exact small-system references, and reproducibility.  Every
// tolerance is pinned as a constant in the implementation.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sseplab/harness.hpp"

namespace sseplab::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;  // measured values, bands, or the aborting error
};

struct AcceptanceReport {
  std::vector<CriterionResult> criteria;
  int passed() const;
  bool all_pass() const;
};

// Runs the full suite against `spec`, writing exactly one PASS/FAIL line per
// criterion to `out` (plus a header and a closing tally).  Criteria that
// read per-replicate rows take them from `rows_path` when nonempty — the
// file must match the spec — and otherwise from a fresh in-memory run; the
// suite never writes simulation outputs.  A malformed or mismatched rows
// file raises config_error.  `workers` follows the ensemble-runner
// convention (0 = hardware concurrency).
AcceptanceReport run_acceptance(const harness::ExperimentSpec& spec,
                                const std::string& rows_path, std::ostream& out,
                                int workers = 0);

}  // namespace sseplab::verify
