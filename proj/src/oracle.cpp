#include "sseplab/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace sseplab::oracle {

namespace {

constexpr int kMaxStates = 100000;

void check_state_count(std::size_t count) {
  if (count > kMaxStates) {
    throw config_error("oracle: state space too large (" + std::to_string(count) + " states)");
  }
}

RateMatrix make_empty(int n) {
  RateMatrix q;
  q.n = n;
  q.rows.resize(static_cast<std::size_t>(n));
  q.exit_rate.assign(static_cast<std::size_t>(n), 0.0);
  return q;
}

void add_rate(RateMatrix& q, int from, int to, double rate) {
  q.rows[static_cast<std::size_t>(from)].emplace_back(to, rate);
  q.exit_rate[static_cast<std::size_t>(from)] += rate;
}

}  // namespace

double RateMatrix::uniformization_rate() const {
  double rate = 0.0;
  for (const double e : exit_rate) rate = std::max(rate, e);
  return rate;
}

double TransitionMatrix::max_row_sum_error() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += at(i, j);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

// ----- state enumeration -----------------------------------------------------

std::vector<std::uint32_t> exclusion_states(int sites, int particles) {
  if (sites < 1 || sites > 25) throw config_error("exclusion_states: sites out of range");
  if (particles < 0 || particles > sites) {
    throw config_error("exclusion_states: particle count out of range");
  }
  std::vector<std::uint32_t> states;
  for (std::uint32_t mask = 0; mask < (1u << sites); ++mask) {
    if (std::popcount(mask) == particles) states.push_back(mask);
  }
  check_state_count(states.size());
  return states;
}

std::vector<int> permutation_at_rank(int sites, std::uint64_t rank) {
  std::vector<int> pool(static_cast<std::size_t>(sites));
  std::iota(pool.begin(), pool.end(), 0);
  std::uint64_t fact = 1;
  for (int i = 2; i <= sites; ++i) fact *= static_cast<std::uint64_t>(i);
  if (rank >= fact) throw config_error("permutation_at_rank: rank out of range");
  std::vector<int> perm;
  perm.reserve(pool.size());
  for (int i = sites; i >= 1; --i) {
    fact /= static_cast<std::uint64_t>(i);
    const std::size_t pick = static_cast<std::size_t>(rank / fact);
    rank %= fact;
    perm.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return perm;
}

std::uint64_t rank_of_permutation(const std::vector<int>& perm) {
  const std::size_t n = perm.size();
  std::uint64_t rank = 0;
  std::uint64_t fact = 1;
  for (std::size_t i = 2; i <= n; ++i) fact *= i;
  for (std::size_t i = 0; i < n; ++i) {
    fact /= (n - i);
    std::uint64_t smaller = 0;
    for (std::size_t j = i + 1; j < n; ++j) smaller += perm[j] < perm[i];
    rank += smaller * fact;
  }
  return rank;
}

// ----- model builders ---------------------------------------------------------

namespace {

RateMatrix exclusion_generator(int sites, int particles, bool ring) {
  if (ring && sites < 3) throw config_error("exclusion_ring_generator: need at least 3 sites");
  if (!ring && sites < 2) throw config_error("exclusion_segment_generator: need at least 2 sites");
  const std::vector<std::uint32_t> states = exclusion_states(sites, particles);
  auto index_of = [&states](std::uint32_t mask) {
    return static_cast<int>(std::lower_bound(states.begin(), states.end(), mask) - states.begin());
  };
  RateMatrix q = make_empty(static_cast<int>(states.size()));
  const int bonds = ring ? sites : sites - 1;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const std::uint32_t mask = states[s];
    for (int b = 0; b < bonds; ++b) {
      const int i = b;
      const int j = (b + 1) % sites;
      const bool bi = (mask >> i) & 1u;
      const bool bj = (mask >> j) & 1u;
      if (bi == bj) continue;  // exchange is a no-op
      const std::uint32_t flipped = mask ^ ((1u << i) | (1u << j));
      add_rate(q, static_cast<int>(s), index_of(flipped), 0.5);
    }
  }
  return q;
}

}  // namespace

RateMatrix exclusion_ring_generator(int sites, int particles) {
  return exclusion_generator(sites, particles, true);
}

RateMatrix exclusion_segment_generator(int sites, int particles) {
  return exclusion_generator(sites, particles, false);
}

RateMatrix stirring_segment_generator(int sites) {
  if (sites < 2) throw config_error("stirring_segment_generator: need at least 2 sites");
  std::uint64_t count = 1;
  for (int i = 2; i <= sites; ++i) count *= static_cast<std::uint64_t>(i);
  check_state_count(count);
  RateMatrix q = make_empty(static_cast<int>(count));
  // State = word arr with arr[site] = label, lexicographic order = rank.
  for (std::uint64_t s = 0; s < count; ++s) {
    std::vector<int> arr = permutation_at_rank(sites, s);
    for (int b = 0; b + 1 < sites; ++b) {
      std::swap(arr[static_cast<std::size_t>(b)], arr[static_cast<std::size_t>(b) + 1]);
      add_rate(q, static_cast<int>(s), static_cast<int>(rank_of_permutation(arr)), 0.5);
      std::swap(arr[static_cast<std::size_t>(b)], arr[static_cast<std::size_t>(b) + 1]);
    }
  }
  return q;
}

RateMatrix walker_generator(int radius) {
  if (radius < 1) throw config_error("walker_generator: radius must be >= 1");
  const int n = 2 * radius + 1;
  check_state_count(static_cast<std::size_t>(n));
  RateMatrix q = make_empty(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0) add_rate(q, i, i - 1, 0.5);
    if (i + 1 < n) add_rate(q, i, i + 1, 0.5);
  }
  return q;
}

RateMatrix build_generator(const ModelSpec& model) {
  switch (model.kind) {
    case ModelSpec::Kind::exclusion_ring:
      return exclusion_ring_generator(model.sites, model.particles);
    case ModelSpec::Kind::exclusion_segment:
      return exclusion_segment_generator(model.sites, model.particles);
    case ModelSpec::Kind::stirring_segment:
      return stirring_segment_generator(model.sites);
    case ModelSpec::Kind::single_walker:
      return walker_generator(model.radius);
  }
  throw config_error("build_generator: unknown model kind");
}

// ----- uniformization ----------------------------------------------------------

namespace {

// S = I + Q/L as sparse rows (diagonal entry included).
std::vector<std::vector<std::pair<int, double>>> uniformized_step(const RateMatrix& q,
                                                                  double uniform_rate) {
  std::vector<std::vector<std::pair<int, double>>> s(q.rows.size());
  for (std::size_t i = 0; i < q.rows.size(); ++i) {
    s[i].reserve(q.rows[i].size() + 1);
    s[i].emplace_back(static_cast<int>(i), 1.0 - q.exit_rate[i] / uniform_rate);
    for (const auto& [j, rate] : q.rows[i]) s[i].emplace_back(j, rate / uniform_rate);
  }
  return s;
}

void validate_uniformization_args(double t, double tol) {
  if (!(t >= 0.0)) throw config_error("uniformization: t must be >= 0");
  if (!(tol > 0.0 && tol < 1.0)) throw config_error("uniformization: tol must lie in (0, 1)");
}

// Poisson(L*t) weights fed to the accumulate callback until the cumulative
// weight reaches 1 - tol; the callback advances the matrix/vector power.
template <typename Accumulate>
double poisson_sweep(double lambda_t, double tol, Accumulate&& accumulate) {
  double weight = std::exp(-lambda_t);
  if (weight == 0.0) {
    throw config_error("uniformization: horizon too large for direct series summation");
  }
  double cumulative = weight;
  accumulate(0, weight);
  const long cap = static_cast<long>(lambda_t + 60.0 * std::sqrt(lambda_t + 1.0)) + 200;
  long k = 0;
  while (cumulative < 1.0 - tol) {
    ++k;
    if (k > cap) throw config_error("uniformization: tolerance unattainable within iteration cap");
    weight *= lambda_t / static_cast<double>(k);
    accumulate(k, weight);
    cumulative += weight;
  }
  return std::max(0.0, 1.0 - cumulative);
}

}  // namespace

TransitionMatrix uniformized_transition(const RateMatrix& q, double t, double tol) {
  validate_uniformization_args(t, tol);
  const std::size_t n = static_cast<std::size_t>(q.n);
  TransitionMatrix result;
  result.n = q.n;
  result.p.assign(n * n, 0.0);
  const double uniform_rate = q.uniformization_rate();
  if (t == 0.0 || uniform_rate == 0.0) {
    for (std::size_t i = 0; i < n; ++i) result.p[i * n + i] = 1.0;
    result.eps_trunc = 0.0;
    return result;
  }
  const auto step = uniformized_step(q, uniform_rate);
  // power = S^k, accumulated into result with Poisson weights.
  std::vector<double> power(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) power[i * n + i] = 1.0;
  std::vector<double> next(n * n);
  result.eps_trunc = poisson_sweep(uniform_rate * t, tol, [&](long k, double weight) {
    if (k > 0) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = &power[i * n];
        double* out = &next[i * n];
        for (std::size_t l = 0; l < n; ++l) {
          const double v = row[l];
          if (v == 0.0) continue;
          for (const auto& [j, s] : step[l]) out[static_cast<std::size_t>(j)] += v * s;
        }
      }
      power.swap(next);
    }
    for (std::size_t e = 0; e < n * n; ++e) result.p[e] += weight * power[e];
  });
  return result;
}

std::vector<double> uniformized_row(const RateMatrix& q, std::vector<double> initial, double t,
                                    double tol) {
  validate_uniformization_args(t, tol);
  const std::size_t n = static_cast<std::size_t>(q.n);
  if (initial.size() != n) throw config_error("uniformized_row: distribution size mismatch");
  const double uniform_rate = q.uniformization_rate();
  if (t == 0.0 || uniform_rate == 0.0) return initial;
  const auto step = uniformized_step(q, uniform_rate);
  std::vector<double> result(n, 0.0);
  std::vector<double> power = std::move(initial);  // initial * S^k
  std::vector<double> next(n);
  poisson_sweep(uniform_rate * t, tol, [&](long k, double weight) {
    if (k > 0) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t l = 0; l < n; ++l) {
        const double v = power[l];
        if (v == 0.0) continue;
        for (const auto& [j, s] : step[l]) next[static_cast<std::size_t>(j)] += v * s;
      }
      power.swap(next);
    }
    for (std::size_t e = 0; e < n; ++e) result[e] += weight * power[e];
  });
  return result;
}

// ----- negative correlation ----------------------------------------------------

NegCorrReport check_negative_correlation(int sites, double time, double tol) {
  if (sites < 2 || sites > 5) {
    throw config_error("check_negative_correlation: sites must lie in [2, 5]");
  }
  const RateMatrix q = stirring_segment_generator(sites);
  const TransitionMatrix kernel = uniformized_transition(q, time, tol);

  // Identity permutation has lexicographic rank 0; p[s] = P(state s at time).
  const int states = kernel.n;
  std::vector<double> prob(static_cast<std::size_t>(states));
  for (int s = 0; s < states; ++s) prob[static_cast<std::size_t>(s)] = kernel.at(0, s);

  // pos[s][label] = site of `label` in state s.
  std::vector<std::vector<int>> pos(static_cast<std::size_t>(states));
  for (int s = 0; s < states; ++s) {
    const std::vector<int> arr = permutation_at_rank(sites, static_cast<std::uint64_t>(s));
    std::vector<int> inverse(static_cast<std::size_t>(sites));
    for (int site = 0; site < sites; ++site) inverse[static_cast<std::size_t>(arr[static_cast<std::size_t>(site)])] = site;
    pos[static_cast<std::size_t>(s)] = std::move(inverse);
  }

  const std::uint32_t subsets = 1u << sites;
  // marginal[i][A] = P(label i ends inside A).
  std::vector<std::vector<double>> marginal(static_cast<std::size_t>(sites),
                                            std::vector<double>(subsets, 0.0));
  for (int s = 0; s < states; ++s) {
    for (int i = 0; i < sites; ++i) {
      const std::uint32_t site_bit = 1u << pos[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
      for (std::uint32_t a = 0; a < subsets; ++a) {
        if (a & site_bit) marginal[static_cast<std::size_t>(i)][a] += prob[static_cast<std::size_t>(s)];
      }
    }
  }

  NegCorrReport report;
  report.sites = sites;
  report.time = time;
  report.kernel_error = kernel.eps_trunc;
  report.max_violation = 0.0;
  std::vector<std::vector<double>> worst(
      static_cast<std::size_t>(sites) + 1,
      std::vector<double>(static_cast<std::size_t>(sites) + 1, 1.0));

  for (std::uint32_t tset = 1; tset < subsets; ++tset) {
    for (std::uint32_t a = 0; a < subsets; ++a) {
      double joint = 0.0;
      for (int s = 0; s < states; ++s) {
        bool all_in = true;
        for (int i = 0; i < sites && all_in; ++i) {
          if (!(tset & (1u << i))) continue;
          all_in = (a >> pos[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]) & 1u;
        }
        if (all_in) joint += prob[static_cast<std::size_t>(s)];
      }
      double product = 1.0;
      for (int i = 0; i < sites; ++i) {
        if (tset & (1u << i)) product *= marginal[static_cast<std::size_t>(i)][a];
      }
      const double margin = product - joint;
      report.max_violation = std::max(report.max_violation, -margin);
      const std::size_t ts = static_cast<std::size_t>(std::popcount(tset));
      const std::size_t as = static_cast<std::size_t>(std::popcount(a));
      worst[ts][as] = std::min(worst[ts][as], margin);
    }
  }
  for (int ts = 1; ts <= sites; ++ts) {
    for (int as = 0; as <= sites; ++as) {
      report.classes.push_back(NegCorrClass{ts, as, worst[static_cast<std::size_t>(ts)][static_cast<std::size_t>(as)]});
    }
  }
  return report;
}

void write_negcorr_csv(const NegCorrReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw invariant_violation("write_negcorr_csv: cannot open " + path);
  std::fprintf(f, "sites,time,t_size,a_size,worst_margin\n");
  for (const NegCorrClass& c : report.classes) {
    std::fprintf(f, "%d,%.17g,%d,%d,%.17g\n", report.sites, report.time, c.t_size, c.a_size,
                 c.worst_margin);
  }
  std::fclose(f);
}

// ----- walker functionals --------------------------------------------------------

int default_walker_truncation(double t) {
  if (!(t >= 0.0)) throw config_error("default_walker_truncation: t must be >= 0");
  return static_cast<int>(std::ceil(t + 6.0 * std::sqrt(t) + 20.0));
}

double mean_positive_walk(double t, int truncation_radius) {
  if (!(t >= 0.0)) throw config_error("mean_positive_walk: t must be >= 0");
  if (t == 0.0) return 0.0;
  const RateMatrix q = walker_generator(truncation_radius);
  std::vector<double> initial(static_cast<std::size_t>(q.n), 0.0);
  initial[static_cast<std::size_t>(truncation_radius)] = 1.0;  // start at the origin
  const std::vector<double> law = uniformized_row(q, std::move(initial), t, 1e-14);
  const double boundary_mass = law.front() + law.back();
  if (boundary_mass > 1e-12) {
    throw config_error("mean_positive_walk: truncation too small (boundary mass " +
                       std::to_string(boundary_mass) + ")");
  }
  double mean = 0.0;
  for (int z = 1; z <= truncation_radius; ++z) {
    mean += static_cast<double>(z) * law[static_cast<std::size_t>(truncation_radius + z)];
  }
  return mean;
}

// ----- exact current law -----------------------------------------------------------

double CurrentPmf::total() const {
  double sum = 0.0;
  for (const double v : p) sum += v;
  return sum;
}

CurrentPmf exact_current_distribution(int sites, core::Density rho, double t) {
  if (sites < 2 || sites > 5) {
    throw config_error("exact_current_distribution: sites must lie in [2, 5]");
  }
  const double r = rho;
  const RateMatrix q = stirring_segment_generator(sites);
  std::vector<double> identity_row(static_cast<std::size_t>(q.n), 0.0);
  identity_row[0] = 1.0;
  const std::vector<double> perm_law = uniformized_row(q, std::move(identity_row), t, 1e-13);

  // Sites with index < left_count sit left of the middle bond.
  const int left_count = (sites + 1) / 2;
  std::vector<double> pmf(static_cast<std::size_t>(2 * sites + 1), 0.0);
  const int offset = sites;

  for (int s = 0; s < q.n; ++s) {
    const double ps = perm_law[static_cast<std::size_t>(s)];
    if (ps == 0.0) continue;
    const std::vector<int> arr = permutation_at_rank(sites, static_cast<std::uint64_t>(s));
    std::vector<int> pos(static_cast<std::size_t>(sites));
    for (int site = 0; site < sites; ++site) pos[static_cast<std::size_t>(arr[static_cast<std::size_t>(site)])] = site;
    for (std::uint32_t config = 0; config < (1u << sites); ++config) {
      double weight = ps;
      int current = 0;
      for (int i = 0; i < sites; ++i) {
        const bool occupied = (config >> i) & 1u;
        weight *= occupied ? r : 1.0 - r;
        if (!occupied) continue;
        const bool started_left = i < left_count;
        const bool ended_left = pos[static_cast<std::size_t>(i)] < left_count;
        if (started_left && !ended_left) ++current;
        if (!started_left && ended_left) --current;
      }
      pmf[static_cast<std::size_t>(current + offset)] += weight;
    }
  }

  // Trim zero tails but always keep the j=0 cell.
  int lo = 0;
  int hi = 2 * sites;
  while (lo < offset && pmf[static_cast<std::size_t>(lo)] == 0.0) ++lo;
  while (hi > offset && pmf[static_cast<std::size_t>(hi)] == 0.0) --hi;
  CurrentPmf result;
  result.j_min = lo - offset;
  result.p.assign(pmf.begin() + lo, pmf.begin() + hi + 1);
  return result;
}

double total_variation(const CurrentPmf& a, const CurrentPmf& b) {
  const int lo = std::min(a.j_min, b.j_min);
  const int hi = std::max(a.j_min + static_cast<int>(a.p.size()),
                          b.j_min + static_cast<int>(b.p.size())) -
                 1;
  double sum = 0.0;
  for (int j = lo; j <= hi; ++j) sum += std::abs(a.at(j) - b.at(j));
  return 0.5 * sum;
}

}  // namespace sseplab::oracle
