#pragma once
// Observables of one replicate: the net current across the origin bond, its
// martingale/drift decomposition, left-right crossing counts and variables of
// the stirring construction, the tagged-particle path, and interparticle
// spacings.

#include <cstdint>
#include <optional>
#include <vector>

#include "sseplab/core.hpp"
#include "sseplab/dynamics.hpp"
#include "sseplab/graphical.hpp"

namespace sseplab::observables {

// Net particle current J across the bond (0, 1): +1 when a particle hops
// 0 -> 1, -1 when one hops 1 -> 0.
struct CurrentPath {
  double horizon = 0.0;
  std::vector<double> jump_times;
  std::vector<std::int8_t> jump_signs;
  std::vector<std::int64_t> jump_prefix;  // J after each jump

  std::size_t jump_index_at(double t) const;
  std::int64_t value(double t) const;  // J(t)
  std::int64_t positive_count(double t) const;
  std::int64_t negative_count(double t) const;
  // J at integer times 0..upto inclusive.
  std::vector<std::int64_t> integer_values(int upto) const;
};

CurrentPath current(const dynamics::OccupancyTrajectory& occupancy);

// Exact pathwise decomposition J = M + A where
// A(t) = (1/2) * integral_0^t (eta_s(0) - eta_s(1)) ds,
// integrated exactly over the inter-event intervals.
struct Decomposition {
  const CurrentPath* path = nullptr;
  std::vector<double> break_times;
  std::vector<double> cum_integral;
  std::vector<double> rate_after;

  double drift(double t) const;  // A(t)
  double martingale(double t) const { return static_cast<double>(path->value(t)) - drift(t); }
};

Decomposition decompose(const CurrentPath& path, const dynamics::OccupancyTrajectory& occupancy);

// Counts of stirring particles that crossed the origin bond from the left
// (labels <= 0 now right of it) and from the right; always equal.
struct KCounts {
  std::int64_t k_plus = 0;
  std::int64_t k_minus = 0;
};

KCounts k_counts(const graphical::StirringTrajectory& stirring, double t);

// The crossing locations and their initial occupancies: labels i_1<...<i_K<=0
// whose particles sit right of the origin bond at time t, labels
// 0<j_1<...<j_K now left of it, and the attached occupancy variables.
struct CrossingVariables {
  std::vector<std::int32_t> left_labels;   // i_k, ascending
  std::vector<std::int32_t> right_labels;  // j_k, ascending
  std::vector<std::int8_t> left_occupied;  // eta_0(i_k)
  std::vector<std::int8_t> right_occupied; // eta_0(j_k)

  std::size_t count() const { return left_labels.size(); }
  // Signed contributions eta_0(i_k) - eta_0(j_k) in {-1, 0, +1}.
  std::vector<std::int8_t> differences() const;
  std::int64_t sum() const;
};

CrossingVariables crossing_variables(const graphical::StirringTrajectory& stirring,
                                     const core::Configuration& initial, double t);

// The tagged particle: at t=0 the rightmost particle at a site <= 0.  Its
// path replays the exclusion motion off the shared clocks -- a ring adjacent
// to the particle moves it exactly when the neighboring site is empty, so the
// particle order is preserved.  The ranked positions Y_n come independently
// from the occupancy field, so the identity X(t) = Y_{J(t)}(t) ties genuinely
// different code paths together.
class TaggedPath {
 public:
  TaggedPath(int start, const dynamics::OccupancyTrajectory* occupancy);

  int start() const { return start_; }              // X(0)
  int position(double t) const;                     // X(t)
  std::int64_t displacement(double t) const { return position(t) - start_; }

  // Y_n(t): for n >= 1 the n-th particle right of the origin bond, for n <= 0
  // the (|n|+1)-th particle at sites <= 0, counting outwards.
  int ranked_position(std::int64_t n, double t) const;

 private:
  int start_;
  const dynamics::OccupancyTrajectory* occupancy_;
  std::vector<double> move_times_;
  std::vector<std::int32_t> move_positions_;  // position after each move
};

// Empty when no site <= 0 is occupied (the caller should resample the
// initial configuration and record having done so).
std::optional<TaggedPath> tagged_path(const graphical::StirringTrajectory& stirring,
                                      const dynamics::OccupancyTrajectory& occupancy);

// Ranked particle positions at time t for ranks [n_lo, n_hi] (see
// TaggedPath::ranked_position for the rank convention).
std::vector<int> ranked_positions(const core::Configuration& occupancy, std::int64_t n_lo,
                                  std::int64_t n_hi);

// Interparticle spacings d_i(t) = Y_{i+1}(t) - Y_i(t) for i in
// [i_lo, i_hi] excluding i = 0 (the spacing straddling the origin bond is a
// different object and is deliberately left out).
std::vector<int> spacings(const dynamics::OccupancyTrajectory& occupancy, double t,
                          std::int64_t i_lo, std::int64_t i_hi);

}  // namespace sseplab::observables
