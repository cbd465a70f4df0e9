#include "sseplab/verify.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sseplab/dynamics.hpp"
#include "sseplab/graphical.hpp"
#include "sseplab/observables.hpp"
#include "sseplab/oracle.hpp"
#include "sseplab/stats.hpp"

namespace sseplab::verify {

namespace {

// ----- pinned tolerances and sizes (the acceptance contract) ------------------
constexpr std::int64_t kIdentityReplicates = 1000;   // criterion 1
constexpr std::int64_t kContrastReplicates = 2000;   // criteria 10 and 11
constexpr int kBootstrapResamples = 200;
constexpr double kVarianceSlopeLo = 0.42;            // criterion 2
constexpr double kVarianceSlopeHi = 0.58;
constexpr double kCurrentVarianceBand = 0.10;        // criterion 3
constexpr double kTaggedVarianceBand = 0.12;
constexpr double kCrossingMeanBand = 0.05;
constexpr double kMeanCrossingSigmas = 3.0;          // criterion 4
constexpr double kCovarianceBand = 0.15;             // criterion 5
constexpr double kCovarianceSeMultiple = 4.0;
constexpr double kNormalityThreshold = 0.05;         // criterion 6
constexpr double kCrossingLawSigmas = 3.0;           // criterion 7
constexpr double kTwoSiteTolerance = 1e-10;          // criterion 8
constexpr double kNegcorrTolerance = 1e-12;
constexpr double kOracleKernelTol = 1e-13;
constexpr int kMonteCarloReplicates = 100000;
constexpr double kTotalVariationBound = 0.02;
constexpr double kMaxMomentSlopeBound = 1.65;        // criterion 9
constexpr double kGapDilationSmall = 64.0;           // criterion 10
constexpr double kGapDilationLarge = 256.0;
constexpr double kFrameHorizon = 64.0;               // criterion 11
constexpr double kTwoSampleAlpha = 0.01;
constexpr double kGofThreshold = 1e-3;               // criterion 12
constexpr int kGeometricCells = 8;                   // gaps 1..7 plus the tail
constexpr double kCoupledHorizon = 64.0;             // criterion 13
constexpr int kCoupledReplicates = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double value, int digits = 4) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*g", digits, value);
  return buffer;
}

std::uint64_t sub_seed(const harness::ExperimentSpec& spec, std::int64_t which) {
  return core::derive_key(spec.seed, core::StreamPurpose::aux_run, which);
}

// Memoized computation whose failure becomes a criterion detail instead of
// aborting the suite.
template <typename T>
class Lazy {
 public:
  explicit Lazy(std::function<T()> make) : make_(std::move(make)) {}

  const T* get() {
    if (!attempted_) {
      attempted_ = true;
      try {
        value_.emplace(make_());
      } catch (const std::exception& e) {
        error_ = e.what();
      }
    }
    return value_ ? &*value_ : nullptr;
  }
  const std::string& error() const { return error_; }

 private:
  std::function<T()> make_;
  bool attempted_ = false;
  std::optional<T> value_;
  std::string error_;
};

// Geometric(rho) cell probabilities over {1..kGeometricCells-1, tail}.
std::vector<double> geometric_cells(double rho) {
  std::vector<double> probs;
  for (int k = 1; k < kGeometricCells; ++k) {
    probs.push_back(rho * std::pow(1.0 - rho, k - 1));
  }
  probs.push_back(std::pow(1.0 - rho, kGeometricCells - 1));
  return probs;
}

stats::ChiSquare geometric_fit(const std::vector<std::int64_t>& draws, double rho) {
  std::vector<std::int64_t> observed(kGeometricCells, 0);
  for (std::int64_t d : draws) {
    if (d < 1) throw invariant_violation("geometric draw below 1");
    ++observed[static_cast<std::size_t>(std::min<std::int64_t>(d, kGeometricCells) - 1)];
  }
  return stats::chi_square_gof(observed, geometric_cells(rho));
}

}  // namespace

int AcceptanceReport::passed() const {
  int count = 0;
  for (const CriterionResult& criterion : criteria) count += criterion.pass;
  return count;
}

bool AcceptanceReport::all_pass() const {
  return passed() == static_cast<int>(criteria.size()) && !criteria.empty();
}

AcceptanceReport run_acceptance(const harness::ExperimentSpec& spec,
                                const std::string& rows_path, std::ostream& out,
                                int workers) {
  spec.validate();

  // Persisted rows, when supplied, must parse and match the spec's grid; a
  // usable file replaces the fresh run for the row-based criteria.
  std::optional<stats::EnsembleSummary> file_summary;
  if (!rows_path.empty()) {
    file_summary = stats::summary_from_rows(spec, harness::read_rows(rows_path));
  }

  stats::RunOptions pooled;
  pooled.workers = workers;

  Lazy<stats::EnsembleSummary> primary([&] {
    harness::ExperimentSpec s = spec;
    s.retain_paths = true;  // integer-time paths feed criterion 9
    stats::RunOptions options = pooled;
    options.spacing_depth = 8;  // spacing pools feed criterion 12
    return stats::run_ensemble(s, options);
  });
  Lazy<stats::EnsembleSummary> rerun([&] {
    stats::RunOptions options = pooled;
    options.spacing_depth = 0;
    return stats::run_ensemble(spec, options);
  });
  Lazy<stats::EnsembleSummary> covariance_run([&] {
    harness::ExperimentSpec s = spec;
    s.t_grid = {0.25, 0.5, 0.75, 1.0};
    s.seed = sub_seed(spec, 1);
    stats::RunOptions options = pooled;
    options.spacing_depth = 0;
    return stats::run_ensemble(s, options);
  });
  const auto gap_ensemble = [&](double lambda, std::int64_t seed_index) {
    harness::ExperimentSpec s = spec;
    s.lambda = lambda;
    s.replicates = kContrastReplicates;
    s.seed = sub_seed(spec, seed_index);
    stats::RunOptions options = pooled;
    options.spacing_depth = 0;
    return stats::run_ensemble(s, options);
  };
  Lazy<stats::EnsembleSummary> gap_small([&] { return gap_ensemble(kGapDilationSmall, 2); });
  Lazy<stats::EnsembleSummary> gap_large([&] { return gap_ensemble(kGapDilationLarge, 3); });
  Lazy<std::vector<double>> frame_displacements([&] {
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(kContrastReplicates));
    const std::uint64_t base = sub_seed(spec, 4);
    for (std::int64_t r = 0; r < kContrastReplicates; ++r) {
      const dynamics::LagrangianTrajectory frame = dynamics::evolve_lagrangian(
          core::Density(spec.rho), kFrameHorizon,
          core::derive_key(base, core::StreamPurpose::replicate, r), spec.window_delta);
      samples.push_back(static_cast<double>(frame.displacement(kFrameHorizon)));
    }
    return samples;
  });
  Lazy<stats::EnsembleSummary> global_displacements([&] {
    harness::ExperimentSpec s = spec;
    s.lambda = kFrameHorizon;
    s.t_grid = {1.0};
    s.replicates = kContrastReplicates;
    s.seed = sub_seed(spec, 5);
    stats::RunOptions options = pooled;
    options.spacing_depth = 0;
    return stats::run_ensemble(s, options);
  });

  // The row-based criteria read the persisted file when given, else the
  // fresh primary ensemble.
  const auto rows_source = [&]() -> const stats::EnsembleSummary* {
    if (file_summary) return &*file_summary;
    return primary.get();
  };
  const auto rows_error = [&]() -> std::string { return "aborted: " + primary.error(); };

  AcceptanceReport report;
  const auto add = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    CriterionResult result;
    result.id = id;
    result.name = name;
    try {
      const Outcome outcome = body();
      result.pass = outcome.pass;
      result.detail = outcome.detail;
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("aborted: ") + e.what();
    }
    char tag[16];
    std::snprintf(tag, sizeof tag, "%02d", id);
    out << (result.pass ? "[PASS] " : "[FAIL] ") << tag << ' ' << result.name << " — "
        << result.detail << '\n';
    out.flush();
    report.criteria.push_back(result);
  };

  out << "acceptance suite: rho=" << num(spec.rho) << " lambda=" << num(spec.lambda)
      << " replicates=" << spec.replicates << " seed=" << spec.seed << '\n';
  out << "row-based criteria read: " << (file_summary ? rows_path : "fresh ensemble") << '\n';

  add(1, "pathwise-identities", [&] {
    harness::ExperimentSpec s = spec;
    s.replicates = kIdentityReplicates;
    s.retain_paths = false;
    s.seed = sub_seed(spec, 0);
    stats::RunOptions options = pooled;
    options.spacing_depth = 0;
    options.check_direct = true;
    stats::run_ensemble(s, options);  // throws on any identity violation
    return Outcome{true, std::to_string(kIdentityReplicates) + " replicates to horizon " +
                             num(s.horizon()) +
                             ": signed crossing counts, martingale resummation, "
                             "crossing-variable sums, ranked tagged position, and "
                             "two-route occupancies all agree"};
  });

  add(2, "variance-scaling-current", [&] {
    const stats::EnsembleSummary* rows = rows_source();
    if (!rows) return Outcome{false, rows_error()};
    const stats::ScalingFit fit =
        stats::variance_scaling(*rows, stats::Observable::current, kBootstrapResamples);
    const bool ok = fit.slope >= kVarianceSlopeLo && fit.slope <= kVarianceSlopeHi;
    return Outcome{ok, "log-log slope " + num(fit.slope) + " (band [" +
                           num(kVarianceSlopeLo) + ", " + num(kVarianceSlopeHi) +
                           "], bootstrap se " + num(fit.stderr_boot) + ")"};
  });

  add(3, "limiting-constants", [&] {
    const stats::EnsembleSummary* rows = rows_source();
    if (!rows) return Outcome{false, rows_error()};
    const auto entries = stats::limiting_constants(*rows);
    const double bands[3] = {kCurrentVarianceBand, kTaggedVarianceBand, kCrossingMeanBand};
    const char* labels[3] = {"var[J]/sqrt(t)", "var[X]/sqrt(t)", "mean[K]/sqrt(t)"};
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < 3; ++i) {
      const double ratio = entries[i].value / entries[i].theory;
      ok = ok && ratio >= 1.0 - bands[i] && ratio <= 1.0 + bands[i];
      if (i > 0) detail += "; ";
      detail += std::string(labels[i]) + " " + num(entries[i].value) + " vs " +
                num(entries[i].theory) + " (ratio " + num(ratio) + ", band ±" +
                num(100.0 * bands[i], 3) + "%)";
    }
    return Outcome{ok, detail};
  });

  add(4, "crossing-mean-bound", [&] {
    const stats::EnsembleSummary* rows = rows_source();
    if (!rows) return Outcome{false, rows_error()};
    double worst_slack = 1e300;
    double worst_time = 0.0;
    for (std::size_t ti = 0; ti < rows->times.size(); ++ti) {
      const stats::MomentAccumulator& k = rows->moments[ti].crossings;
      const double se = std::sqrt(k.variance() / static_cast<double>(k.count()));
      const double slack = std::sqrt(rows->times[ti]) + kMeanCrossingSigmas * se - k.mean();
      if (slack < worst_slack) {
        worst_slack = slack;
        worst_time = rows->times[ti];
      }
    }
    return Outcome{worst_slack >= 0.0,
                   "mean crossings stay below sqrt(t) + 3 SE at every grid time; smallest "
                   "slack " +
                       num(worst_slack) + " at t=" + num(worst_time)};
  });

  add(5, "fbm-covariance", [&] {
    const stats::EnsembleSummary* run = covariance_run.get();
    if (!run) return Outcome{false, "aborted: " + covariance_run.error()};
    const auto cells = stats::covariance_check(*run, kBootstrapResamples);
    bool ok = true;
    double worst_ratio = 0.0;
    std::string worst;
    for (const stats::CovarianceCell& cell : cells) {
      const double allowed =
          std::max(kCovarianceBand * std::abs(cell.theory), kCovarianceSeMultiple * cell.se);
      const double deviation = std::abs(cell.value - cell.theory);
      ok = ok && deviation <= allowed;
      if (allowed > 0.0 && deviation / allowed > worst_ratio) {
        worst_ratio = deviation / allowed;
        worst = "(" + num(cell.t) + ", " + num(cell.s) + "): |" + num(cell.value) + " - " +
                num(cell.theory) + "| vs allowed " + num(allowed);
      }
    }
    return Outcome{ok, std::to_string(cells.size()) +
                           " ordered time pairs; tightest cell " + worst};
  });

  add(6, "normality", [&] {
    const stats::EnsembleSummary* rows = rows_source();
    if (!rows) return Outcome{false, rows_error()};
    const stats::TheoryConstants theory{core::Density(spec.rho)};
    const std::size_t t_count = rows->times.size();
    const double root_t = std::sqrt(rows->times.back());
    const double sd_current = std::sqrt(theory.sigma2_J * root_t);
    const double sd_tagged = std::sqrt(theory.sigma2_X * root_t);
    std::vector<double> z_current, z_tagged;
    for (std::int64_t r = 0; r < rows->spec.replicates; ++r) {
      const harness::ResultRow& row =
          rows->rows[static_cast<std::size_t>(r) * t_count + t_count - 1];
      z_current.push_back(static_cast<double>(row.current) / sd_current);
      z_tagged.push_back(static_cast<double>(row.tagged) / sd_tagged);
    }
    const stats::KsResult ks_current =
        stats::ks_one_sample(std::move(z_current), [](double x) { return stats::normal_cdf(x); });
    const stats::KsResult ks_tagged =
        stats::ks_one_sample(std::move(z_tagged), [](double x) { return stats::normal_cdf(x); });
    const bool ok =
        ks_current.d < kNormalityThreshold && ks_tagged.d < kNormalityThreshold;
    return Outcome{ok, "KS distance to the standard normal at the final time: current " +
                           num(ks_current.d) + ", tagged " + num(ks_tagged.d) +
                           " (threshold " + num(kNormalityThreshold) + ")"};
  });

  add(7, "crossing-variable-law", [&] {
    const stats::EnsembleSummary* run = primary.get();
    if (!run) return Outcome{false, "aborted: " + primary.error()};
    const stats::CrossingTally& tally = run->crossing_tally;
    const double total = static_cast<double>(tally.total());
    if (!(total > 0.0)) return Outcome{false, "no crossing variables pooled"};
    const double p_side = spec.rho * (1.0 - spec.rho);
    const double p_zero = 1.0 - 2.0 * p_side;
    const double se_side = std::sqrt(p_side * (1.0 - p_side) / total);
    const double se_zero = std::sqrt(p_zero * (1.0 - p_zero) / total);
    const double hat_plus = static_cast<double>(tally.plus) / total;
    const double hat_minus = static_cast<double>(tally.minus) / total;
    const double hat_zero = static_cast<double>(tally.zero) / total;
    const bool ok = std::abs(hat_plus - p_side) <= kCrossingLawSigmas * se_side &&
                    std::abs(hat_minus - p_side) <= kCrossingLawSigmas * se_side &&
                    std::abs(hat_zero - p_zero) <= kCrossingLawSigmas * se_zero;
    return Outcome{ok, "pooled " + std::to_string(tally.total()) + " variables: P(+1)=" +
                           num(hat_plus) + ", P(-1)=" + num(hat_minus) + ", P(0)=" +
                           num(hat_zero) + " vs (" + num(p_side) + ", " + num(p_side) +
                           ", " + num(p_zero) + ") within 3 SE"};
  });

  add(8, "oracle-exactness", [&] {
    const double stay =
        oracle::uniformized_transition(oracle::exclusion_segment_generator(2, 1),
                                       std::log(2.0), kOracleKernelTol)
            .at(0, 0);
    const bool ok_stay = std::abs(stay - 0.75) < kTwoSiteTolerance;

    double worst_violation = 0.0;
    for (double t : {0.5, 1.0, 2.0}) {
      const oracle::NegCorrReport negcorr =
          oracle::check_negative_correlation(4, t, kOracleKernelTol);
      worst_violation = std::max(worst_violation, negcorr.max_violation);
    }
    const bool ok_negcorr = worst_violation <= kNegcorrTolerance;

    const core::LatticeWindow segment = core::LatticeWindow::segment(-1, 2);
    const oracle::CurrentPmf exact =
        oracle::exact_current_distribution(4, core::Density(spec.rho), 1.0);
    std::vector<double> histogram(9, 0.0);
    const std::uint64_t base = sub_seed(spec, 6);
    for (int r = 0; r < kMonteCarloReplicates; ++r) {
      const std::uint64_t key = core::derive_key(base, core::StreamPurpose::mc_check, r);
      const graphical::EventLog log = graphical::generate_events(segment, 1.0, key);
      const core::Configuration init = core::sample_config(
          segment, core::Density(spec.rho),
          core::derive_key(key, core::StreamPurpose::init_attempt, 0));
      const dynamics::OccupancyTrajectory occupancy = dynamics::direct_exclusion(init, &log);
      const std::int64_t j = observables::current(occupancy).value(1.0);
      if (j < -4 || j > 4) throw invariant_violation("four-site current out of range");
      histogram[static_cast<std::size_t>(j + 4)] += 1.0;
    }
    oracle::CurrentPmf empirical;
    empirical.j_min = -4;
    empirical.p.resize(9);
    for (std::size_t k = 0; k < 9; ++k) {
      empirical.p[k] = histogram[k] / static_cast<double>(kMonteCarloReplicates);
    }
    const double tv = oracle::total_variation(exact, empirical);
    const bool ok_tv = tv < kTotalVariationBound;

    return Outcome{ok_stay && ok_negcorr && ok_tv,
                   "two-site stay probability off by " + num(std::abs(stay - 0.75), 3) +
                       "; worst negative-correlation violation " + num(worst_violation, 3) +
                       "; four-site current total variation " + num(tv, 3) + " at " +
                       std::to_string(kMonteCarloReplicates) + " replicates"};
  });

  add(9, "max-moment-scaling", [&] {
    const stats::EnsembleSummary* run = primary.get();
    if (!run) return Outcome{false, "aborted: " + primary.error()};
    const stats::MomentScalingFit fit =
        stats::max_moment_scaling(*run, {16, 32, 64, 128, 256});
    return Outcome{fit.slope <= kMaxMomentSlopeBound,
                   "sixth-moment prefix-maximum slope " + num(fit.slope) + " (bound " +
                       num(kMaxMomentSlopeBound) + ") over prefixes 16..256"};
  });

  add(10, "tagged-current-gap", [&] {
    const stats::EnsembleSummary* small = gap_small.get();
    if (!small) return Outcome{false, "aborted: " + gap_small.error()};
    const stats::EnsembleSummary* large = gap_large.get();
    if (!large) return Outcome{false, "aborted: " + gap_large.error()};
    const stats::GapReport report_small = stats::tagged_current_gap(*small);
    const stats::GapReport report_large = stats::tagged_current_gap(*large);
    return Outcome{report_large.median < report_small.median,
                   "median scaled sup-gap " + num(report_large.median) + " at dilation " +
                       num(kGapDilationLarge) + " vs " + num(report_small.median) +
                       " at dilation " + num(kGapDilationSmall) + " (q90 " +
                       num(report_large.q90) + " vs " + num(report_small.q90) + ")"};
  });

  add(11, "frame-vs-global-displacement", [&] {
    const std::vector<double>* frame = frame_displacements.get();
    if (!frame) return Outcome{false, "aborted: " + frame_displacements.error()};
    const stats::EnsembleSummary* global_run = global_displacements.get();
    if (!global_run) return Outcome{false, "aborted: " + global_displacements.error()};
    std::vector<double> global_samples;
    for (const harness::ResultRow& row : global_run->rows) {
      global_samples.push_back(static_cast<double>(row.tagged));
    }
    const double d = stats::ks_two_sample(*frame, global_samples);
    const double threshold = stats::ks_two_sample_threshold(
        frame->size(), global_samples.size(), kTwoSampleAlpha);
    return Outcome{d < threshold, "two-sample KS distance " + num(d) + " vs threshold " +
                                      num(threshold) + " at horizon " + num(kFrameHorizon)};
  });

  add(12, "stationary-geometry", [&] {
    const stats::EnsembleSummary* run = primary.get();
    if (!run) return Outcome{false, "aborted: " + primary.error()};
    if (run->spacing_histogram.empty()) return Outcome{false, "no spacing pools"};
    // Spacings are read at the grid time nearest half the horizon.
    std::size_t mid = 0;
    for (std::size_t ti = 1; ti < run->times.size(); ++ti) {
      if (std::abs(run->times[ti] - 0.5 * spec.horizon()) <
          std::abs(run->times[mid] - 0.5 * spec.horizon())) {
        mid = ti;
      }
    }
    std::vector<std::int64_t> gaps;
    for (const auto& [gap, count] : run->spacing_histogram[mid]) {
      for (std::int64_t c = 0; c < count; ++c) gaps.push_back(gap);
    }
    const stats::ChiSquare spacing_fit = geometric_fit(gaps, spec.rho);
    std::vector<std::int64_t> depths;
    for (std::int64_t x0 : run->start_positions) depths.push_back(1 - x0);
    const stats::ChiSquare depth_fit = geometric_fit(depths, spec.rho);
    const bool ok = spacing_fit.p >= kGofThreshold && depth_fit.p >= kGofThreshold;
    return Outcome{ok, "chi-square vs Geometric(" + num(spec.rho) + "): spacings at t=" +
                           num(run->times[mid]) + " give p=" + num(spacing_fit.p) +
                           ", first-particle depth gives p=" + num(depth_fit.p) +
                           " (need >= " + num(kGofThreshold) + ")"};
  });

  add(13, "determinism", [&] {
    const stats::EnsembleSummary* first = primary.get();
    if (!first) return Outcome{false, "aborted: " + primary.error()};
    const stats::EnsembleSummary* second = rerun.get();
    if (!second) return Outcome{false, "aborted: " + rerun.error()};
    const bool identical =
        harness::rows_to_csv(first->rows) == harness::rows_to_csv(second->rows);

    graphical::CoupledCheckSpec coupled;
    coupled.rho = spec.rho;
    coupled.horizon = kCoupledHorizon;
    coupled.times = {16.0, 32.0, 64.0};
    coupled.window_delta = spec.window_delta;
    coupled.replicates = kCoupledReplicates;
    coupled.seed = sub_seed(spec, 7);
    const graphical::CoupledCheckReport window = graphical::coupled_window_check(coupled);

    return Outcome{identical && window.disagreements == 0,
                   std::string("replayed rows ") +
                       (identical ? "byte-identical" : "DIFFER") + "; window coupling " +
                       std::to_string(window.disagreements) + "/" +
                       std::to_string(window.replicates) + " disagreements at horizon " +
                       num(kCoupledHorizon)};
  });

  out << report.passed() << "/" << report.criteria.size() << " criteria passed\n";
  out.flush();
  return report;
}

}  // namespace sseplab::verify
