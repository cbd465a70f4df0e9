#pragma once
// Exact finite-state continuous-time Markov chain references.
//
// Small systems (exclusion on rings and segments, stirring permutations,
// a single walker on a truncated line) are solved exactly by uniformization:
// P(t) = sum_k e^{-Lt}(Lt)^k/k! S^k with S = I + Q/L.  These exact laws
// validate the Monte Carlo engine, verify the negative-correlation
// inequality exhaustively, and evaluate the mean positive part of the
// symmetric walk used in crossing-count comparisons.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sseplab/core.hpp"

namespace sseplab::oracle {

// Conservative generator of a finite CTMC, stored as sparse rows of
// off-diagonal rates; the diagonal is the negated row sum.
struct RateMatrix {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;  // off-diagonal (state, rate)
  std::vector<double> exit_rate;                          // -q(a, a)

  // Largest total exit rate: the uniformization constant.
  double uniformization_rate() const;
};

// Dense transition kernel with a certified one-sided truncation error:
// every row sums to 1 - eps_row with 0 <= eps_row <= eps_trunc.
struct TransitionMatrix {
  int n = 0;
  std::vector<double> p;  // row-major
  double eps_trunc = 0.0;

  double at(int from, int to) const { return p[static_cast<std::size_t>(from) * n + to]; }
  double max_row_sum_error() const;
};

// ----- model builders --------------------------------------------------------

// Which small system to materialize.
struct ModelSpec {
  enum class Kind { exclusion_ring, exclusion_segment, stirring_segment, single_walker };
  Kind kind = Kind::exclusion_segment;
  int sites = 0;      // ring or segment size; ignored by single_walker
  int particles = 0;  // exclusion models only
  int radius = 0;     // single_walker: line is -radius..radius
};

RateMatrix build_generator(const ModelSpec& model);

// Exclusion with a conserved particle number; states are the occupation
// bitmasks (bit i = site i), enumerated in increasing binary value.  Each
// bond with differing endpoint contents exchanges them at rate 1/2; on the
// ring the bond (n-1, 0) wraps around.
RateMatrix exclusion_ring_generator(int sites, int particles);
RateMatrix exclusion_segment_generator(int sites, int particles);

// Stirring on a segment: states are the permutations of {0..n-1} in
// lexicographic order; every adjacent transposition runs at rate 1/2.
RateMatrix stirring_segment_generator(int sites);

// Rate-1 symmetric walker on the truncated line -radius..radius (jumps that
// would leave the line are dropped; callers certify the boundary is unfelt).
RateMatrix walker_generator(int radius);

// State enumeration helpers shared with tests and reports.
std::vector<std::uint32_t> exclusion_states(int sites, int particles);
std::vector<int> permutation_at_rank(int sites, std::uint64_t rank);
std::uint64_t rank_of_permutation(const std::vector<int>& perm);

// ----- uniformization --------------------------------------------------------

// Full kernel; the Poisson series is truncated once its cumulative weight
// reaches 1 - tol, and the dropped tail is certified in eps_trunc.
TransitionMatrix uniformized_transition(const RateMatrix& q, double t, double tol);

// One distribution row pushed through the kernel without forming it.
std::vector<double> uniformized_row(const RateMatrix& q, std::vector<double> initial, double t,
                                    double tol);

// ----- exhaustive negative-correlation audit ---------------------------------

// For stirring on `sites` sites started from the identity, checks
//   P(all of T end inside A)  <=  prod_{i in T} P(i ends inside A)
// for every nonempty T and every A.  margin = product - joint, so the
// inequality asserts margin >= 0 up to the kernel's truncation error.
struct NegCorrClass {
  int t_size = 0;
  int a_size = 0;
  double worst_margin = 0.0;
};

struct NegCorrReport {
  int sites = 0;
  double time = 0.0;
  double kernel_error = 0.0;
  double max_violation = 0.0;  // max over (T, A) of joint - product
  std::vector<NegCorrClass> classes;
};

NegCorrReport check_negative_correlation(int sites, double time, double tol);
void write_negcorr_csv(const NegCorrReport& report, const std::string& path);

// ----- walker functionals ------------------------------------------------------

// Truncation radius with provably negligible boundary mass at horizon t.
int default_walker_truncation(double t);

// E[max(z, 0)] for the rate-1 symmetric walk at time t, exact on the
// truncated line; throws if the boundary carries mass above 1e-12.
double mean_positive_walk(double t, int truncation_radius);

// ----- exact current law on a small segment ------------------------------------

// Law of the net particle current across the middle bond of an n-site
// segment at time t, with the initial configuration product-Bernoulli(rho):
// exact stirring permutation law summed over all 2^n initial configurations.
struct CurrentPmf {
  int j_min = 0;
  std::vector<double> p;

  double at(std::int64_t j) const {
    const std::int64_t k = j - j_min;
    if (k < 0 || k >= static_cast<std::int64_t>(p.size())) return 0.0;
    return p[static_cast<std::size_t>(k)];
  }
  double total() const;
};

CurrentPmf exact_current_distribution(int sites, core::Density rho, double t);

double total_variation(const CurrentPmf& a, const CurrentPmf& b);

}  // namespace sseplab::oracle
