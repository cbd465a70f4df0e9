#pragma once
// Exclusion dynamics read off the stirring construction, the same dynamics
// replayed directly on occupancies, and the process seen from the tagged
// particle (origin-anchored frame).

#include <cstdint>
#include <memory>
#include <vector>

#include "sseplab/core.hpp"
#include "sseplab/graphical.hpp"

namespace sseplab::dynamics {

// Occupancy path eta_t over a window.  Two construction routes exist on
// purpose: one reads occupancies through the stirring maps, the other replays
// the swaps directly.  Under a shared event log they must agree bitwise,
// which is enforced as a verification check elsewhere.
class OccupancyTrajectory {
 public:
  enum class Route { stirring, direct };

  // eta_t(x) = eta_0(label at x), queried through the stirring trajectory.
  static OccupancyTrajectory from_stirring(const graphical::StirringTrajectory* stirring,
                                           core::Configuration initial);
  // Replay the event log's swaps on the occupancy vector, with snapshots
  // every ~sqrt(E) events for point queries.
  static OccupancyTrajectory direct(core::Configuration initial, const graphical::EventLog* log);

  Route route() const { return route_; }
  const core::LatticeWindow& window() const { return initial_.window; }
  const core::Configuration& initial() const { return initial_; }
  const graphical::EventLog& log() const;
  double horizon() const { return log().horizon; }

  std::uint8_t at(double t, int site) const;
  std::uint8_t at_index(std::size_t ring_index, int site) const;
  core::Configuration occupancy(double t) const;
  core::Configuration occupancy_at_index(std::size_t ring_index) const;
  std::size_t index_at(double t) const;

 private:
  OccupancyTrajectory(Route route, core::Configuration initial)
      : route_(route), initial_(std::move(initial)) {}

  Route route_;
  core::Configuration initial_;
  const graphical::StirringTrajectory* stirring_ = nullptr;  // stirring route
  const graphical::EventLog* log_ = nullptr;                 // direct route
  std::size_t stride_ = 1;                                   // direct route
  std::vector<std::vector<std::uint8_t>> snaps_;             // direct route
};

// ----- process seen from the tagged particle --------------------------------

// Frame process: occupancies relative to the tagged particle, which sits
// permanently at frame site 0.  Exchanges run at rate 1/2 on every frame bond
// not incident to the origin; two rate-1/2 candidate clocks propose moving
// the tagged particle one step right/left and are accepted iff the target
// frame site is empty (thinning).  An accepted move shifts the whole frame,
// and the site entering at the far edge is filled with a fresh Bernoulli(rho)
// draw.
class LagrangianTrajectory {
 public:
  double horizon() const { return horizon_; }
  int frame_halfwidth() const { return frame_.half_width(); }

  // Net displacement Z(t) of the tagged particle, and the two jump counters.
  std::int64_t displacement(double t) const;
  std::int64_t jumps_right(double t) const;
  std::int64_t jumps_left(double t) const;

  // Exact decomposition Z = martingale + drift with
  // drift(t) = (1/2) * integral_0^t (occ(-1) - occ(+1)) ds.
  double drift(double t) const;
  double martingale(double t) const { return static_cast<double>(displacement(t)) - drift(t); }

  const core::Configuration& initial_frame() const { return initial_frame_; }
  const core::Configuration& final_frame() const { return final_frame_; }

 private:
  friend LagrangianTrajectory evolve_lagrangian_from(core::Configuration, core::Density,
                                                     double, std::uint64_t);
  LagrangianTrajectory(core::LatticeWindow frame, core::Configuration initial,
                       core::Configuration final_frame)
      : frame_(frame), initial_frame_(std::move(initial)), final_frame_(std::move(final_frame)) {}

  std::size_t shift_index_at(double t) const;

  core::LatticeWindow frame_;
  core::Configuration initial_frame_;
  core::Configuration final_frame_;
  double horizon_ = 0.0;
  std::vector<double> shift_times_;
  std::vector<std::int8_t> shift_signs_;
  std::vector<std::int64_t> shift_prefix_;  // net displacement after k shifts
  // Piecewise-constant drift integrand breakpoints.
  std::vector<double> drift_times_;
  std::vector<double> drift_cum_;
  std::vector<double> drift_rate_;
};

// Build the two occupancy routes.
OccupancyTrajectory exclusion_from_stirring(const graphical::StirringTrajectory* stirring,
                                            const core::Configuration& initial);
OccupancyTrajectory direct_exclusion(const core::Configuration& initial,
                                     const graphical::EventLog* log);

// Evolve the frame process from a stationary start (product Bernoulli(rho)
// conditioned on an occupied origin).  rho must lie strictly inside (0, 1).
// Frame streams use their own purpose tags, so the law is independent of the
// fixed-window runs under the same replicate key.
LagrangianTrajectory evolve_lagrangian(core::Density rho, double horizon,
                                       std::uint64_t replicate_key, double window_delta = 1e-9);

// Test hook: evolve from an explicit initial frame (site 0 must be occupied).
// Fills entering the frame edge still draw Bernoulli(rho).
LagrangianTrajectory evolve_lagrangian_from(core::Configuration initial_frame, core::Density rho,
                                            double horizon, std::uint64_t replicate_key);

}  // namespace sseplab::dynamics
