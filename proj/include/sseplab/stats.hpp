#pragma once
// Ensemble orchestration and the statistical layer: streaming moment
// accumulation, scaling-exponent fits, limiting-constant and covariance
// comparisons, distributional tests, and synthetic references.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sseplab/core.hpp"
#include "sseplab/harness.hpp"

namespace sseplab::stats {

// Closed-form constants of the scaling limits at density rho (strictly
// inside (0, 1)).
struct TheoryConstants {
  double rho;
  double sigma2_J;  // sqrt(2/pi) (1-rho) rho   : current variance scale
  double sigma2_X;  // sqrt(2/pi) (1-rho) / rho : tagged variance scale
  double k_limit;   // 1/sqrt(2 pi)             : crossing-count mean scale

  explicit TheoryConstants(core::Density density);

  // Covariance of the Hurst-1/4 fractional Brownian limit with variance
  // scale sigma2: (sigma2/2)(sqrt(t) + sqrt(s) - sqrt(t-s)), evaluated only
  // on ordered times t >= s > 0.
  static double fbm_cov(double sigma2, double t, double s);
};

// Streaming central moments up to order six.  add() consumes one value;
// merge() combines two accumulators exactly, so a fixed pairwise reduction
// over replicate-indexed leaves gives bit-identical results no matter in
// which order the replicates finished.
class MomentAccumulator {
 public:
  void add(double x);
  void merge(const MomentAccumulator& other);
  // Fixed pairwise tree over the values in index order.
  static MomentAccumulator tree_of(const std::vector<double>& values);

  std::int64_t count() const { return n_; }
  double mean() const;
  double central_moment(int p) const;  // M_p / n for p in [2, 6]
  double variance() const;             // unbiased sample variance, n >= 2
  double variance_se() const;          // large-sample SE of the variance, n >= 4

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double sums_[5] = {0.0, 0.0, 0.0, 0.0, 0.0};  // central sums of orders 2..6
};

// Pooled counts of the crossing variables A_k at the final grid time.
struct CrossingTally {
  std::int64_t plus = 0;
  std::int64_t minus = 0;
  std::int64_t zero = 0;
  std::int64_t total() const { return plus + minus + zero; }
};

// Per-time accumulators for the five row observables.
struct ObservableMoments {
  MomentAccumulator current, tagged, crossings, martingale, drift;
};

struct EnsembleSummary {
  harness::ExperimentSpec spec;
  std::vector<double> times;               // absolute grid times
  std::vector<ObservableMoments> moments;  // one entry per grid time
  std::vector<harness::ResultRow> rows;    // ordered by (replicate, t)
  std::vector<std::int64_t> start_positions;  // tagged X(0) per replicate
  CrossingTally crossing_tally;               // pooled at the final grid time
  // Per grid time: spacing value -> pooled count over replicates and ranks.
  std::vector<std::map<std::int64_t, std::int64_t>> spacing_histogram;
  // Per replicate: J at integer times 0..floor(horizon); empty unless retained.
  std::vector<std::vector<std::int64_t>> current_paths;
  std::int64_t resampled_replicates = 0;
};

// Switches for specialised runs; the defaults serve production use.
struct RunOptions {
  bool check_direct = false;  // also replay label-free and compare occupancies
  int spacing_depth = 8;      // pool spacings d_i for 0 < |i| <= depth; 0 = off
  int workers = 0;            // 0: hardware concurrency
  int max_init_attempts = 100;  // initial-condition resamples per replicate
};

// Runs `spec.replicates` independent replicates on streams derived from
// (seed, replicate index), evaluates all observables on the grid, enforces
// the exact pathwise identities in every replicate, and merges accumulators
// in replicate-index order.  Throws invariant_violation (naming the
// replicate) on any identity violation and config_error if more than 1% of
// replicates needed an initial-condition resample.
EnsembleSummary run_ensemble(const harness::ExperimentSpec& spec,
                             const RunOptions& options = RunOptions{});

// Rebuilds the summary skeleton (times, moments, rows) from persisted rows,
// e.g. to verify a rows.csv written earlier.  Per-replicate extras (start
// positions, tallies, paths) stay empty.
EnsembleSummary summary_from_rows(const harness::ExperimentSpec& spec,
                                  std::vector<harness::ResultRow> rows);

enum class Observable { current, tagged, crossings, martingale, drift };

double observable_value(const harness::ResultRow& row, Observable obs);

// Least-squares slope of ln(sample variance) against ln(absolute time), with
// a bootstrap standard error over replicate resamples.
struct ScalingFit {
  double slope = 0.0;
  double stderr_boot = 0.0;
  std::vector<double> log_times;
  std::vector<double> log_values;
};

ScalingFit variance_scaling(const EnsembleSummary& summary, Observable obs,
                            int bootstrap_resamples = 200);

// Var(J(T))/sqrt(T), Var(X(T))/sqrt(T) and mean(K(T))/sqrt(T) at the largest
// grid time T >= 256, against sigma2_J, sigma2_X and k_limit.
struct LimitEntry {
  std::string name;
  double value = 0.0;
  double se = 0.0;
  double theory = 0.0;
};

std::vector<LimitEntry> limiting_constants(const EnsembleSummary& summary);

// Empirical cov(lambda^{-1/4} J(lambda t), lambda^{-1/4} J(lambda s)) for
// every ordered grid pair t >= s, against the fractional-Brownian form.
struct CovarianceCell {
  double t = 0.0, s = 0.0;  // relative grid times, t >= s
  double value = 0.0, se = 0.0, theory = 0.0;
};

std::vector<CovarianceCell> covariance_check(const EnsembleSummary& summary,
                                             int bootstrap_resamples = 200);

// --- distribution tests ------------------------------------------------------

// Tail sum 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 z^2), truncated once terms drop
// below 1e-10; the asymptotic law of sqrt(n) * D under the null.
double kolmogorov_tail(double z);

struct KsResult {
  double d = 0.0;
  double p = 0.0;  // clamped below at 1e-30
};

// Exact D against a reference cdf; asymptotic p via kolmogorov_tail.
// Requires at least 100 points.
KsResult ks_one_sample(std::vector<double> sample,
                       const std::function<double(double)>& cdf);

// Exact two-sample D, and the alpha-level rejection threshold
// sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(n m)).
double ks_two_sample(std::vector<double> a, std::vector<double> b);
double ks_two_sample_threshold(std::size_t n, std::size_t m, double alpha);

// --- path functionals --------------------------------------------------------

// Slope of ln E[max_{1<=i<=m} J^6(i)] against ln m over the requested prefix
// lengths; requires retained integer-time paths.
struct MomentScalingFit {
  double slope = 0.0;
  std::vector<double> log_m;
  std::vector<double> log_value;
};

MomentScalingFit max_moment_scaling(const EnsembleSummary& summary,
                                    const std::vector<std::int64_t>& m_grid);

// Empirical P(sup_{|i-j| <= delta*lambda} lambda^{-1/4} |J(i)-J(j)| >= eps)
// per (delta, eps) pair; a tightness diagnostic on retained paths.
struct ModulusCell {
  double delta = 0.0;
  double epsilon = 0.0;
  double probability = 0.0;
};

std::vector<ModulusCell> modulus_diagnostic(const EnsembleSummary& summary,
                                            const std::vector<double>& deltas,
                                            const std::vector<double>& epsilons);

// Distribution over replicates of sup_grid lambda^{-1/4} |X - J/rho| (X read
// as displacement), summarised by median and 0.9-quantile.
struct GapReport {
  double lambda = 0.0;
  double median = 0.0;
  double q90 = 0.0;
  std::vector<double> sup_gaps;  // one entry per replicate, unsorted
};

GapReport tagged_current_gap(const EnsembleSummary& summary);

// --- synthetic references and small numerics ---------------------------------

// Centered Gaussian vectors with the Hurst-1/4 covariance on `times`
// (ascending, positive, at most 64 points), via a dense Cholesky factor.
std::vector<std::vector<double>> fbm_samples(const std::vector<double>& times,
                                             double sigma2, std::int64_t count,
                                             std::uint64_t seed);

struct ChiSquare {
  double statistic = 0.0;
  std::int64_t dof = 0;
  double p = 0.0;  // clamped below at 1e-30
};

// Goodness of fit of observed cell counts against cell probabilities.
ChiSquare chi_square_gof(const std::vector<std::int64_t>& observed,
                         const std::vector<double>& cell_probs);

double normal_cdf(double x);
// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

// Standard error of `statistic` over `resamples` bootstrap draws of
// replicate indices [0, replicate_count); streams derive from `seed`.
double bootstrap_se(std::int64_t replicate_count, int resamples, std::uint64_t seed,
                    const std::function<double(const std::vector<std::int64_t>&)>& statistic);

}  // namespace sseplab::stats
