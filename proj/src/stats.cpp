#include "sseplab/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <numbers>
#include <optional>
#include <thread>

#include "sseplab/dynamics.hpp"
#include "sseplab/graphical.hpp"
#include "sseplab/observables.hpp"

namespace sseplab::stats {

namespace {

// Fixed tags separating the bootstrap streams of different operations; they
// feed derive_key(seed, bootstrap, tag) and are part of the reproducibility
// contract.
constexpr std::int64_t kBootstrapTagVariance = 1;    // + observable ordinal
constexpr std::int64_t kBootstrapTagCovariance = 16; // + ordered-pair index

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (!(den > 0.0)) throw invariant_violation("slope fit: degenerate abscissae");
  return num / den;
}

}  // namespace

// ----- theory constants ------------------------------------------------------

TheoryConstants::TheoryConstants(core::Density density) : rho(density.value) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw config_error("limit constants need a density strictly inside (0, 1)");
  }
  const double root = std::sqrt(2.0 / std::numbers::pi);
  sigma2_J = root * (1.0 - rho) * rho;
  sigma2_X = root * (1.0 - rho) / rho;
  k_limit = 1.0 / std::sqrt(2.0 * std::numbers::pi);
}

double TheoryConstants::fbm_cov(double sigma2, double t, double s) {
  if (!(sigma2 > 0.0)) throw config_error("fbm covariance needs a positive variance scale");
  if (!(s > 0.0) || !(t >= s)) {
    throw config_error("fbm covariance is evaluated on ordered times t >= s > 0");
  }
  return 0.5 * sigma2 * (std::sqrt(t) + std::sqrt(s) - std::sqrt(t - s));
}

// ----- moment accumulator ----------------------------------------------------

void MomentAccumulator::add(double x) {
  MomentAccumulator single;
  single.n_ = 1;
  single.mean_ = x;
  merge(single);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  static constexpr double kBinom[7][7] = {
      {1, 0, 0, 0, 0, 0, 0},  {1, 1, 0, 0, 0, 0, 0},   {1, 2, 1, 0, 0, 0, 0},
      {1, 3, 3, 1, 0, 0, 0},  {1, 4, 6, 4, 1, 0, 0},   {1, 5, 10, 10, 5, 1, 0},
      {1, 6, 15, 20, 15, 6, 1}};
  const double n1 = static_cast<double>(n_);
  const double n2 = static_cast<double>(other.n_);
  const double n = n1 + n2;
  const double delta = other.mean_ - mean_;
  // Central sums indexed by order; order 0 carries the count, order 1 is 0.
  const double a[7] = {n1, 0.0, sums_[0], sums_[1], sums_[2], sums_[3], sums_[4]};
  const double b[7] = {n2, 0.0, other.sums_[0], other.sums_[1], other.sums_[2], other.sums_[3],
                       other.sums_[4]};
  double merged[5];
  for (int p = 2; p <= 6; ++p) {
    double sum = a[p] + b[p];
    for (int k = 1; k <= p - 2; ++k) {
      sum += kBinom[p][k] * std::pow(delta, k) *
             (std::pow(-n2 / n, k) * a[p - k] + std::pow(n1 / n, k) * b[p - k]);
    }
    sum += std::pow(n1 * n2 / n * delta, p) *
           (1.0 / std::pow(n2, p - 1) - std::pow(-1.0 / n1, p - 1));
    merged[p - 2] = sum;
  }
  mean_ += delta * n2 / n;
  n_ += other.n_;
  for (int p = 0; p < 5; ++p) sums_[p] = merged[p];
}

MomentAccumulator MomentAccumulator::tree_of(const std::vector<double>& values) {
  if (values.empty()) return {};
  std::vector<MomentAccumulator> level(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) level[i].add(values[i]);
  while (level.size() > 1) {
    std::vector<MomentAccumulator> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      MomentAccumulator pair = level[i];
      pair.merge(level[i + 1]);
      next.push_back(pair);
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level.front();
}

double MomentAccumulator::mean() const {
  if (n_ == 0) throw invariant_violation("moment accumulator: mean of empty sample");
  return mean_;
}

double MomentAccumulator::central_moment(int p) const {
  if (p < 2 || p > 6) throw config_error("central moments are tracked for orders 2..6");
  if (n_ == 0) throw invariant_violation("moment accumulator: moment of empty sample");
  return sums_[p - 2] / static_cast<double>(n_);
}

double MomentAccumulator::variance() const {
  if (n_ < 2) throw invariant_violation("moment accumulator: variance needs two points");
  return sums_[0] / static_cast<double>(n_ - 1);
}

double MomentAccumulator::variance_se() const {
  if (n_ < 4) throw invariant_violation("moment accumulator: variance SE needs four points");
  const double n = static_cast<double>(n_);
  const double m4 = central_moment(4);
  const double s2 = variance();
  const double inner = m4 - s2 * s2 * (n - 3.0) / (n - 1.0);
  return std::sqrt(std::max(0.0, inner / n));
}

// ----- ensemble runner -------------------------------------------------------

namespace {

struct ReplicateOutcome {
  std::vector<harness::ResultRow> rows;
  std::int64_t start_position = 0;
  CrossingTally tally;
  std::vector<std::vector<std::int64_t>> spacing_samples;  // per grid time
  std::vector<std::int64_t> path;
  bool resampled = false;
};

[[noreturn]] void identity_failure(std::int64_t replicate, double t, const std::string& what) {
  throw invariant_violation("replicate " + std::to_string(replicate) + " at t=" +
                            std::to_string(t) + ": " + what);
}

ReplicateOutcome simulate_replicate(const harness::ExperimentSpec& spec,
                                    const RunOptions& options,
                                    const core::LatticeWindow& window,
                                    const std::vector<double>& times, std::int64_t r) {
  const double horizon = spec.horizon();
  const std::uint64_t key = core::derive_key(spec.seed, core::StreamPurpose::replicate, r);
  const graphical::StirringTrajectory stirring(window,
                                               graphical::generate_events(window, horizon, key));

  // Initial configurations are redrawn (on their own attempt streams) until a
  // tagged particle exists; at production densities and windows the first
  // draw virtually always succeeds.
  core::Configuration initial(window);
  std::optional<dynamics::OccupancyTrajectory> occupancy;
  std::optional<observables::TaggedPath> tagged;
  int attempt = 0;
  for (; attempt < options.max_init_attempts; ++attempt) {
    const std::uint64_t config_key =
        core::derive_key(key, core::StreamPurpose::init_attempt, attempt);
    initial = core::sample_config(window, core::Density(spec.rho), config_key);
    occupancy.emplace(dynamics::exclusion_from_stirring(&stirring, initial));
    tagged = observables::tagged_path(stirring, *occupancy);
    if (tagged.has_value()) break;
  }
  if (!tagged.has_value()) {
    throw config_error("replicate " + std::to_string(r) + ": no tagged particle after " +
                       std::to_string(options.max_init_attempts) + " initial draws");
  }

  ReplicateOutcome outcome;
  outcome.resampled = attempt > 0;
  outcome.start_position = tagged->start();

  const observables::CurrentPath path = observables::current(*occupancy);
  const observables::Decomposition decomposition = observables::decompose(path, *occupancy);
  const double float_tol =
      1e-9 * std::max<double>(1.0, static_cast<double>(stirring.ring_count()));

  outcome.rows.reserve(times.size());
  if (options.spacing_depth > 0) outcome.spacing_samples.resize(times.size());

  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    const std::int64_t j = path.value(t);
    if (j != path.positive_count(t) - path.negative_count(t)) {
      identity_failure(r, t, "current disagrees with its signed crossing counts");
    }
    const observables::KCounts crossing_counts = observables::k_counts(stirring, t);
    if (crossing_counts.k_plus != crossing_counts.k_minus) {
      identity_failure(r, t, "left and right crossing counts differ");
    }
    const observables::CrossingVariables crossings =
        observables::crossing_variables(stirring, initial, t);
    if (static_cast<std::int64_t>(crossings.count()) != crossing_counts.k_plus) {
      identity_failure(r, t, "crossing-variable count disagrees with the crossing count");
    }
    if (crossings.sum() != j) {
      identity_failure(r, t, "sum of crossing variables disagrees with the current");
    }
    const int position = tagged->position(t);
    if (position != tagged->ranked_position(j, t)) {
      identity_failure(r, t, "tagged position disagrees with the current-ranked particle");
    }
    const double drift_t = decomposition.drift(t);
    const double martingale_t = decomposition.martingale(t);
    if (std::abs(martingale_t + drift_t - static_cast<double>(j)) > float_tol) {
      identity_failure(r, t, "martingale/drift decomposition fails to resum the current");
    }

    harness::ResultRow row;
    row.replicate = r;
    row.t = t;
    row.current = j;
    row.tagged = position - tagged->start();
    row.crossings = crossing_counts.k_plus;
    row.martingale = martingale_t;
    row.drift = drift_t;
    row.resampled = outcome.resampled;
    outcome.rows.push_back(row);

    if (ti + 1 == times.size()) {
      for (std::int8_t d : crossings.differences()) {
        if (d > 0) {
          ++outcome.tally.plus;
        } else if (d < 0) {
          ++outcome.tally.minus;
        } else {
          ++outcome.tally.zero;
        }
      }
    }
    if (options.spacing_depth > 0) {
      const std::vector<int> gaps =
          observables::spacings(*occupancy, t, -options.spacing_depth, options.spacing_depth);
      outcome.spacing_samples[ti].assign(gaps.begin(), gaps.end());
    }
  }

  if (spec.retain_paths) {
    outcome.path = path.integer_values(static_cast<int>(std::floor(horizon)));
  }

  if (options.check_direct) {
    const dynamics::OccupancyTrajectory direct =
        dynamics::direct_exclusion(initial, &stirring.log());
    for (double t : times) {
      if (!(occupancy->occupancy(t) == direct.occupancy(t))) {
        identity_failure(r, t, "stirring-route and direct-route occupancies disagree");
      }
    }
  }
  return outcome;
}

}  // namespace

EnsembleSummary run_ensemble(const harness::ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  if (spec.rho == 0.0) throw config_error("density zero leaves the tagged observables undefined");
  if (options.spacing_depth < 0) throw config_error("spacing_depth must be nonnegative");
  if (options.max_init_attempts < 1) throw config_error("max_init_attempts must be at least 1");

  const core::LatticeWindow window(
      graphical::window_halfwidth(spec.horizon(), spec.window_delta));
  const std::vector<double> times = spec.absolute_times();
  const std::int64_t n = spec.replicates;

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  int workers = options.workers > 0 ? options.workers
                                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = static_cast<int>(std::min<std::int64_t>(workers, n));

  std::atomic<std::int64_t> next{0};
  const auto body = [&]() {
    while (true) {
      const std::int64_t r = next.fetch_add(1);
      if (r >= n) return;
      try {
        outcomes[static_cast<std::size_t>(r)] =
            simulate_replicate(spec, options, window, times, r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread& worker : pool) worker.join();
  }
  // Deterministic error reporting: the lowest-index failure wins, no matter
  // which worker hit it first.
  for (std::int64_t r = 0; r < n; ++r) {
    if (errors[static_cast<std::size_t>(r)]) std::rethrow_exception(errors[static_cast<std::size_t>(r)]);
  }

  EnsembleSummary summary;
  summary.spec = spec;
  summary.times = times;
  summary.rows.reserve(static_cast<std::size_t>(n) * times.size());
  summary.start_positions.reserve(static_cast<std::size_t>(n));
  if (options.spacing_depth > 0) summary.spacing_histogram.resize(times.size());
  if (spec.retain_paths) summary.current_paths.reserve(static_cast<std::size_t>(n));

  for (std::int64_t r = 0; r < n; ++r) {
    ReplicateOutcome& outcome = outcomes[static_cast<std::size_t>(r)];
    summary.rows.insert(summary.rows.end(), outcome.rows.begin(), outcome.rows.end());
    summary.start_positions.push_back(outcome.start_position);
    summary.crossing_tally.plus += outcome.tally.plus;
    summary.crossing_tally.minus += outcome.tally.minus;
    summary.crossing_tally.zero += outcome.tally.zero;
    if (outcome.resampled) ++summary.resampled_replicates;
    for (std::size_t ti = 0; ti < outcome.spacing_samples.size(); ++ti) {
      for (std::int64_t gap : outcome.spacing_samples[ti]) ++summary.spacing_histogram[ti][gap];
    }
    if (spec.retain_paths) summary.current_paths.push_back(std::move(outcome.path));
  }

  if (100 * summary.resampled_replicates > n) {
    throw config_error("initial-condition resample rate exceeds 1% (" +
                       std::to_string(summary.resampled_replicates) + " of " +
                       std::to_string(n) + " replicates)");
  }

  summary.moments.resize(times.size());
  std::vector<double> column(static_cast<std::size_t>(n));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (int field = 0; field < 5; ++field) {
      const Observable obs = static_cast<Observable>(field);
      for (std::int64_t r = 0; r < n; ++r) {
        column[static_cast<std::size_t>(r)] =
            observable_value(summary.rows[static_cast<std::size_t>(r) * times.size() + ti], obs);
      }
      MomentAccumulator acc = MomentAccumulator::tree_of(column);
      ObservableMoments& slot = summary.moments[ti];
      switch (obs) {
        case Observable::current: slot.current = acc; break;
        case Observable::tagged: slot.tagged = acc; break;
        case Observable::crossings: slot.crossings = acc; break;
        case Observable::martingale: slot.martingale = acc; break;
        case Observable::drift: slot.drift = acc; break;
      }
    }
  }
  return summary;
}

EnsembleSummary summary_from_rows(const harness::ExperimentSpec& spec,
                                  std::vector<harness::ResultRow> rows) {
  spec.validate();
  const std::vector<double> times = spec.absolute_times();
  const std::size_t expected = static_cast<std::size_t>(spec.replicates) * times.size();
  if (rows.size() != expected) {
    throw config_error("rows do not match the spec: expected " + std::to_string(expected) +
                       " rows, found " + std::to_string(rows.size()));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const harness::ResultRow& a, const harness::ResultRow& b) {
                     if (a.replicate != b.replicate) return a.replicate < b.replicate;
                     return a.t < b.t;
                   });
  for (std::int64_t r = 0; r < spec.replicates; ++r) {
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      const harness::ResultRow& row = rows[static_cast<std::size_t>(r) * times.size() + ti];
      if (row.replicate != r || row.t != times[ti]) {
        throw config_error("rows do not match the spec grid near replicate " + std::to_string(r));
      }
    }
  }

  EnsembleSummary summary;
  summary.spec = spec;
  summary.times = times;
  summary.rows = std::move(rows);
  summary.moments.resize(times.size());
  std::vector<double> column(static_cast<std::size_t>(spec.replicates));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (int field = 0; field < 5; ++field) {
      const Observable obs = static_cast<Observable>(field);
      for (std::int64_t r = 0; r < spec.replicates; ++r) {
        column[static_cast<std::size_t>(r)] =
            observable_value(summary.rows[static_cast<std::size_t>(r) * times.size() + ti], obs);
      }
      MomentAccumulator acc = MomentAccumulator::tree_of(column);
      ObservableMoments& slot = summary.moments[ti];
      switch (obs) {
        case Observable::current: slot.current = acc; break;
        case Observable::tagged: slot.tagged = acc; break;
        case Observable::crossings: slot.crossings = acc; break;
        case Observable::martingale: slot.martingale = acc; break;
        case Observable::drift: slot.drift = acc; break;
      }
    }
  }
  return summary;
}

double observable_value(const harness::ResultRow& row, Observable obs) {
  switch (obs) {
    case Observable::current: return static_cast<double>(row.current);
    case Observable::tagged: return static_cast<double>(row.tagged);
    case Observable::crossings: return static_cast<double>(row.crossings);
    case Observable::martingale: return row.martingale;
    case Observable::drift: return row.drift;
  }
  throw invariant_violation("unknown observable");
}

// ----- scaling and limit statistics -------------------------------------------

namespace {

// Per-time value columns, replicate-major rows assumed validated.
std::vector<std::vector<double>> value_columns(const EnsembleSummary& summary, Observable obs) {
  const std::size_t t_count = summary.times.size();
  const std::size_t n = static_cast<std::size_t>(summary.spec.replicates);
  if (summary.rows.size() != n * t_count) {
    throw config_error("summary lacks per-replicate rows");
  }
  std::vector<std::vector<double>> columns(t_count, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t ti = 0; ti < t_count; ++ti) {
      columns[ti][r] = observable_value(summary.rows[r * t_count + ti], obs);
    }
  }
  return columns;
}

double variance_over(const std::vector<double>& values, const std::vector<std::int64_t>& idx) {
  const std::size_t n = idx.empty() ? values.size() : idx.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += idx.empty() ? values[i] : values[static_cast<std::size_t>(idx[i])];
  mean /= static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = idx.empty() ? values[i] : values[static_cast<std::size_t>(idx[i])];
    sum += (v - mean) * (v - mean);
  }
  return sum / static_cast<double>(n - 1);
}

double covariance_over(const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<std::int64_t>& idx) {
  const std::size_t n = idx.empty() ? a.size() : idx.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = idx.empty() ? i : static_cast<std::size_t>(idx[i]);
    ma += a[k];
    mb += b[k];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = idx.empty() ? i : static_cast<std::size_t>(idx[i]);
    sum += (a[k] - ma) * (b[k] - mb);
  }
  return sum / static_cast<double>(n - 1);
}

std::vector<std::int64_t> bootstrap_indices(core::RngStream& stream, std::int64_t n) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t& i : idx) {
    i = std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(stream.uniform01() *
                                                                static_cast<double>(n)));
  }
  return idx;
}

}  // namespace

ScalingFit variance_scaling(const EnsembleSummary& summary, Observable obs,
                            int bootstrap_resamples) {
  if (summary.times.size() < 4) {
    throw config_error("variance scaling needs at least 4 grid times");
  }
  if (!(summary.times.back() >= 10.0 * summary.times.front())) {
    throw config_error("variance scaling needs a grid spanning at least one decade");
  }
  if (summary.spec.replicates < 2) throw config_error("variance scaling needs two replicates");
  if (bootstrap_resamples < 2) throw config_error("at least two bootstrap resamples required");
  const std::vector<std::vector<double>> columns = value_columns(summary, obs);

  std::vector<double> log_times, log_values;
  for (std::size_t ti = 0; ti < summary.times.size(); ++ti) {
    const double var = variance_over(columns[ti], {});
    if (!(var > 0.0)) {
      throw config_error("degenerate variance at t=" + std::to_string(summary.times[ti]));
    }
    log_times.push_back(std::log(summary.times[ti]));
    log_values.push_back(std::log(var));
  }

  ScalingFit fit;
  fit.log_times = log_times;
  fit.log_values = log_values;
  fit.slope = lsq_slope(log_times, log_values);

  const std::uint64_t op_seed =
      core::derive_key(summary.spec.seed, core::StreamPurpose::bootstrap,
                       kBootstrapTagVariance + static_cast<std::int64_t>(obs));
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(bootstrap_resamples));
  for (int b = 0; b < bootstrap_resamples; ++b) {
    core::RngStream stream(core::derive_key(op_seed, core::StreamPurpose::bootstrap, b));
    const std::vector<std::int64_t> idx = bootstrap_indices(stream, summary.spec.replicates);
    std::vector<double> ly;
    bool degenerate = false;
    for (std::size_t ti = 0; ti < summary.times.size(); ++ti) {
      const double var = variance_over(columns[ti], idx);
      if (!(var > 0.0)) {
        degenerate = true;
        break;
      }
      ly.push_back(std::log(var));
    }
    if (!degenerate) slopes.push_back(lsq_slope(log_times, ly));
  }
  if (slopes.size() < std::max<std::size_t>(2, static_cast<std::size_t>(bootstrap_resamples) / 2)) {
    throw config_error("bootstrap variances were degenerate in most resamples");
  }
  const double mean_slope = mean_of(slopes);
  double sum = 0.0;
  for (double s : slopes) sum += (s - mean_slope) * (s - mean_slope);
  fit.stderr_boot = std::sqrt(sum / static_cast<double>(slopes.size() - 1));
  return fit;
}

std::vector<LimitEntry> limiting_constants(const EnsembleSummary& summary) {
  if (summary.times.empty() || summary.times.back() < 256.0) {
    throw config_error("limiting constants need a grid reaching t >= 256");
  }
  if (summary.moments.empty()) throw config_error("summary lacks moment accumulators");
  const TheoryConstants theory{core::Density(summary.spec.rho)};
  const double root_t = std::sqrt(summary.times.back());
  const ObservableMoments& last = summary.moments.back();
  const double n = static_cast<double>(last.current.count());

  std::vector<LimitEntry> entries;
  entries.push_back({"var_current_over_sqrt_t", last.current.variance() / root_t,
                     last.current.variance_se() / root_t, theory.sigma2_J});
  entries.push_back({"var_tagged_over_sqrt_t", last.tagged.variance() / root_t,
                     last.tagged.variance_se() / root_t, theory.sigma2_X});
  entries.push_back({"mean_crossings_over_sqrt_t", last.crossings.mean() / root_t,
                     std::sqrt(last.crossings.variance() / n) / root_t, theory.k_limit});
  return entries;
}

std::vector<CovarianceCell> covariance_check(const EnsembleSummary& summary,
                                             int bootstrap_resamples) {
  if (summary.spec.replicates < 2) throw config_error("covariance check needs two replicates");
  if (bootstrap_resamples < 2) throw config_error("at least two bootstrap resamples required");
  const std::vector<std::vector<double>> columns = value_columns(summary, Observable::current);
  const TheoryConstants theory{core::Density(summary.spec.rho)};
  const double scale = 1.0 / std::sqrt(summary.spec.lambda);

  std::vector<CovarianceCell> cells;
  std::int64_t pair_index = 0;
  for (std::size_t i = 0; i < summary.times.size(); ++i) {
    for (std::size_t k = 0; k <= i; ++k) {
      CovarianceCell cell;
      cell.t = summary.spec.t_grid[i];
      cell.s = summary.spec.t_grid[k];
      cell.value = scale * covariance_over(columns[i], columns[k], {});
      cell.theory = TheoryConstants::fbm_cov(theory.sigma2_J, cell.t, cell.s);
      cell.se = bootstrap_se(
          summary.spec.replicates, bootstrap_resamples,
          core::derive_key(summary.spec.seed, core::StreamPurpose::bootstrap,
                           kBootstrapTagCovariance + pair_index),
          [&](const std::vector<std::int64_t>& idx) {
            return scale * covariance_over(columns[i], columns[k], idx);
          });
      cells.push_back(cell);
      ++pair_index;
    }
  }
  return cells;
}

// ----- distribution tests ------------------------------------------------------

double kolmogorov_tail(double z) {
  if (!(z > 1e-8)) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100000; ++k) {
    const double term = 2.0 * std::exp(-2.0 * static_cast<double>(k) * k * z * z);
    if (term < 1e-10) break;
    sum += sign * term;
    sign = -sign;
  }
  return std::min(1.0, std::max(sum, 1e-30));
}

KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.size() < 100) throw config_error("one-sample test needs at least 100 points");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double reference = cdf(sample[i]);
    if (!(reference >= 0.0 && reference <= 1.0)) {
      throw config_error("reference cdf left [0, 1]");
    }
    d = std::max(d, reference - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - reference);
  }
  return {d, kolmogorov_tail(std::sqrt(n) * d)};
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw config_error("two-sample test needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double ks_two_sample_threshold(std::size_t n, std::size_t m, double alpha) {
  if (n == 0 || m == 0) throw config_error("threshold needs nonempty samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) * std::sqrt((nd + md) / (nd * md));
}

// ----- path functionals --------------------------------------------------------

MomentScalingFit max_moment_scaling(const EnsembleSummary& summary,
                                    const std::vector<std::int64_t>& m_grid) {
  if (summary.current_paths.empty()) {
    throw config_error("integer-time paths were not retained");
  }
  if (m_grid.empty()) throw config_error("empty prefix grid");
  for (std::size_t i = 0; i < m_grid.size(); ++i) {
    if (m_grid[i] < 1) throw config_error("prefix lengths must be at least 1");
    if (i > 0 && m_grid[i] <= m_grid[i - 1]) {
      throw config_error("prefix grid must be strictly increasing");
    }
  }
  std::vector<double> sums(m_grid.size(), 0.0);
  for (const std::vector<std::int64_t>& path : summary.current_paths) {
    if (static_cast<std::int64_t>(path.size()) < m_grid.back() + 1) {
      throw config_error("retained paths are shorter than the prefix grid");
    }
    std::int64_t max_abs = 0;
    std::size_t next_mark = 0;
    for (std::int64_t i = 1; i <= m_grid.back(); ++i) {
      max_abs = std::max(max_abs, std::abs(path[static_cast<std::size_t>(i)]));
      if (i == m_grid[next_mark]) {
        sums[next_mark] += std::pow(static_cast<double>(max_abs), 6.0);
        ++next_mark;
      }
    }
  }
  MomentScalingFit fit;
  const double n = static_cast<double>(summary.current_paths.size());
  for (std::size_t k = 0; k < m_grid.size(); ++k) {
    const double mean = sums[k] / n;
    if (!(mean > 0.0)) throw config_error("degenerate sixth moment of the prefix maximum");
    fit.log_m.push_back(std::log(static_cast<double>(m_grid[k])));
    fit.log_value.push_back(std::log(mean));
  }
  fit.slope = lsq_slope(fit.log_m, fit.log_value);
  return fit;
}

std::vector<ModulusCell> modulus_diagnostic(const EnsembleSummary& summary,
                                            const std::vector<double>& deltas,
                                            const std::vector<double>& epsilons) {
  if (summary.current_paths.empty()) {
    throw config_error("integer-time paths were not retained");
  }
  if (deltas.empty() || epsilons.empty()) throw config_error("empty modulus grids");
  for (double delta : deltas) {
    if (!(delta > 0.0 && delta <= 1.0)) throw config_error("delta must lie in (0, 1]");
  }
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw config_error("epsilon must be positive");
  }
  const double lambda = summary.spec.lambda;
  const double scale = std::pow(lambda, -0.25);

  std::vector<ModulusCell> cells;
  for (double delta : deltas) {
    const std::int64_t w = std::max<std::int64_t>(1, std::llround(delta * lambda));
    std::vector<double> moduli;
    moduli.reserve(summary.current_paths.size());
    for (const std::vector<std::int64_t>& path : summary.current_paths) {
      std::deque<std::size_t> maxq, minq;
      std::int64_t modulus = 0;
      for (std::size_t jidx = 0; jidx < path.size(); ++jidx) {
        while (!maxq.empty() && path[maxq.back()] <= path[jidx]) maxq.pop_back();
        maxq.push_back(jidx);
        while (!minq.empty() && path[minq.back()] >= path[jidx]) minq.pop_back();
        minq.push_back(jidx);
        while (maxq.front() + static_cast<std::size_t>(w) < jidx) maxq.pop_front();
        while (minq.front() + static_cast<std::size_t>(w) < jidx) minq.pop_front();
        modulus = std::max(modulus, path[maxq.front()] - path[jidx]);
        modulus = std::max(modulus, path[jidx] - path[minq.front()]);
      }
      moduli.push_back(scale * static_cast<double>(modulus));
    }
    for (double eps : epsilons) {
      std::size_t hits = 0;
      for (double m : moduli) {
        if (m >= eps) ++hits;
      }
      cells.push_back({delta, eps,
                       static_cast<double>(hits) / static_cast<double>(moduli.size())});
    }
  }
  return cells;
}

GapReport tagged_current_gap(const EnsembleSummary& summary) {
  if (!(summary.spec.rho > 0.0)) throw config_error("gap needs a positive density");
  const std::size_t t_count = summary.times.size();
  const std::size_t n = static_cast<std::size_t>(summary.spec.replicates);
  if (summary.rows.size() != n * t_count) throw config_error("summary lacks per-replicate rows");
  const double scale = std::pow(summary.spec.lambda, -0.25);
  const double inv_rho = 1.0 / summary.spec.rho;

  GapReport report;
  report.lambda = summary.spec.lambda;
  report.sup_gaps.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    double sup = 0.0;
    for (std::size_t ti = 0; ti < t_count; ++ti) {
      const harness::ResultRow& row = summary.rows[r * t_count + ti];
      sup = std::max(sup, scale * std::abs(static_cast<double>(row.tagged) -
                                           inv_rho * static_cast<double>(row.current)));
    }
    report.sup_gaps.push_back(sup);
  }
  std::vector<double> sorted = report.sup_gaps;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t count = sorted.size();
  report.median = count % 2 == 1 ? sorted[count / 2]
                                 : 0.5 * (sorted[count / 2 - 1] + sorted[count / 2]);
  const std::size_t q_index = std::min(
      count - 1, static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(count))) - 1);
  report.q90 = sorted[q_index];
  return report;
}

// ----- synthetic references and small numerics ---------------------------------

std::vector<std::vector<double>> fbm_samples(const std::vector<double>& times, double sigma2,
                                             std::int64_t count, std::uint64_t seed) {
  const std::size_t n = times.size();
  if (n == 0 || n > 64) throw config_error("synthetic grid must have 1..64 points");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(times[i] > 0.0)) throw config_error("synthetic grid times must be positive");
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw config_error("synthetic grid must be strictly increasing");
    }
  }
  if (count < 1) throw config_error("at least one synthetic sample required");

  // Dense lower Cholesky factor of the covariance on the grid.
  std::vector<double> chol(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= i; ++k) {
      double value = TheoryConstants::fbm_cov(sigma2, times[i], times[k]);
      for (std::size_t l = 0; l < k; ++l) value -= chol[i * n + l] * chol[k * n + l];
      if (k == i) {
        if (!(value > 0.0)) throw config_error("covariance is not positive definite on this grid");
        chol[i * n + i] = std::sqrt(value);
      } else {
        chol[i * n + k] = value / chol[k * n + k];
      }
    }
  }

  std::vector<std::vector<double>> samples;
  samples.reserve(static_cast<std::size_t>(count));
  std::vector<double> z(n);
  for (std::int64_t s = 0; s < count; ++s) {
    core::RngStream stream(core::derive_key(seed, core::StreamPurpose::synthetic, s));
    for (double& value : z) value = stream.normal();
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k <= i; ++k) sum += chol[i * n + k] * z[k];
      x[i] = sum;
    }
    samples.push_back(std::move(x));
  }
  return samples;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw config_error("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) {
    // Lower series; Q = 1 - P.
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= x / (a + static_cast<double>(k));
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    return std::min(1.0, std::max(0.0, 1.0 - p));
  }
  // Upper continued fraction, modified Lentz.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 10000; ++k) {
    const double an = -static_cast<double>(k) * (static_cast<double>(k) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::min(1.0, std::max(0.0, std::exp(-x + a * std::log(x) - std::lgamma(a)) * h));
}

ChiSquare chi_square_gof(const std::vector<std::int64_t>& observed,
                         const std::vector<double>& cell_probs) {
  if (observed.size() != cell_probs.size()) throw config_error("cell count mismatch");
  if (observed.size() < 2) throw config_error("at least two cells required");
  double prob_sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i] < 0) throw config_error("negative cell count");
    if (!(cell_probs[i] > 0.0)) throw config_error("cell probabilities must be positive");
    prob_sum += cell_probs[i];
    n += observed[i];
  }
  if (std::abs(prob_sum - 1.0) > 1e-9) throw config_error("cell probabilities must sum to 1");
  if (n < 1) throw config_error("empty sample");

  ChiSquare result;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = static_cast<double>(n) * cell_probs[i];
    const double diff = static_cast<double>(observed[i]) - expected;
    result.statistic += diff * diff / expected;
  }
  result.dof = static_cast<std::int64_t>(observed.size()) - 1;
  result.p = std::max(1e-30, gamma_q(0.5 * static_cast<double>(result.dof),
                                     0.5 * result.statistic));
  return result;
}

double bootstrap_se(std::int64_t replicate_count, int resamples, std::uint64_t seed,
                    const std::function<double(const std::vector<std::int64_t>&)>& statistic) {
  if (replicate_count < 1) throw config_error("bootstrap needs at least one replicate");
  if (resamples < 2) throw config_error("bootstrap needs at least two resamples");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    core::RngStream stream(core::derive_key(seed, core::StreamPurpose::bootstrap, b));
    values.push_back(statistic(bootstrap_indices(stream, replicate_count)));
  }
  const double mean = mean_of(values);
  double sum = 0.0;
  for (double v : values) sum += (v - mean) * (v - mean);
  return std::sqrt(sum / static_cast<double>(values.size() - 1));
}

}  // namespace sseplab::stats
