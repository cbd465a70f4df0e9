#pragma once
// Experiment configuration, result-row persistence, and the CSV schemas
// shared by the command-line front end and the statistics layer.

#include <cstdint>
#include <string>
#include <vector>

#include "sseplab/core.hpp"

namespace sseplab::harness {

// Subcommand selector.  A config file may pin one; the command line wins.
enum class Mode { simulate, oracle, verify, report };

// Complete description of an ensemble experiment.  Entries of `t_grid` are
// fractions of the dilation `lambda`; observables are read at the absolute
// times `lambda * t`, each product rounded once to the nearest double.
struct ExperimentSpec {
  Mode mode = Mode::simulate;
  double rho = 0.5;            // particle density, in [0, 1]
  double lambda = 1.0;         // time dilation; horizon = lambda * max(t_grid)
  std::vector<double> t_grid = {0.0625, 0.125, 0.25, 0.5, 1.0};
  std::int64_t replicates = 1000;
  std::uint64_t seed = 0;
  double window_delta = 1e-9;  // light-cone containment failure budget
  bool retain_paths = false;   // keep integer-time current paths per replicate
  std::string out = ".";       // output directory

  double horizon() const { return lambda * t_grid.back(); }
  std::vector<double> absolute_times() const;
  void validate() const;  // throws config_error naming the offending field
};

// Parses the flat `key = value` format: one pair per line, `#` starts a
// comment.  rho, lambda and seed are required; every other key has a
// default.  Unknown, duplicate, malformed, or out-of-range entries raise a
// config_error carrying the line number.
ExperimentSpec parse_spec(const std::string& text);

// Reads a spec file from disk and parses it.
ExperimentSpec load_spec(const std::string& path);

// One observable readout: a single replicate at a single grid time.  The
// tagged entry records the displacement from the particle's starting
// position, so every column is directly comparable with the scaling limits;
// the starting position itself is kept in the ensemble summary.
struct ResultRow {
  std::int64_t replicate = 0;
  double t = 0.0;              // absolute time
  std::int64_t current = 0;    // J, net signed crossings of the origin bond
  std::int64_t tagged = 0;     // X, tagged-particle displacement
  std::int64_t crossings = 0;  // K, labels carried across from either side
  double martingale = 0.0;     // M
  double drift = 0.0;          // A; J = M + A within float tolerance
  bool resampled = false;
  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

// Renders rows in the pinned CSV schema `replicate,t,J,X,K,M,A,resampled`
// with 17-significant-digit floats, ordered by (replicate, t).
std::string rows_to_csv(std::vector<ResultRow> rows);
void write_rows(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> read_rows(const std::string& path);

}  // namespace sseplab::harness
