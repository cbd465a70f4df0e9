#include "sseplab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

namespace sseplab::dynamics {

// ----- occupancy trajectories ------------------------------------------------

OccupancyTrajectory OccupancyTrajectory::from_stirring(
    const graphical::StirringTrajectory* stirring, core::Configuration initial) {
  if (stirring == nullptr) throw config_error("from_stirring: null stirring trajectory");
  if (!(stirring->window() == initial.window)) {
    throw config_error("from_stirring: window mismatch");
  }
  OccupancyTrajectory traj(Route::stirring, std::move(initial));
  traj.stirring_ = stirring;
  return traj;
}

OccupancyTrajectory OccupancyTrajectory::direct(core::Configuration initial,
                                                const graphical::EventLog* log) {
  if (log == nullptr) throw config_error("direct: null event log");
  if (!(log->window == initial.window)) throw config_error("direct: window mismatch");
  OccupancyTrajectory traj(Route::direct, std::move(initial));
  traj.log_ = log;
  const std::size_t events = log->rings.size();
  traj.stride_ = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(events, 1))))));
  std::vector<std::uint8_t> occ = traj.initial_.occ;
  traj.snaps_.push_back(occ);
  const auto& window = traj.initial_.window;
  for (std::size_t m = 0; m < events; ++m) {
    const std::size_t xi = window.site_index(log->rings[m].bond);
    std::swap(occ[xi], occ[xi + 1]);
    if ((m + 1) % traj.stride_ == 0) traj.snaps_.push_back(occ);
  }
  return traj;
}

const graphical::EventLog& OccupancyTrajectory::log() const {
  return route_ == Route::stirring ? stirring_->log() : *log_;
}

std::size_t OccupancyTrajectory::index_at(double t) const {
  if (route_ == Route::stirring) return stirring_->index_at(t);
  if (!(t >= 0.0) || t > log_->horizon) {
    throw config_error("OccupancyTrajectory: query time outside [0, horizon]");
  }
  const auto it = std::upper_bound(
      log_->rings.begin(), log_->rings.end(), t,
      [](double value, const graphical::ClockRing& r) { return value < r.time; });
  return static_cast<std::size_t>(it - log_->rings.begin());
}

std::uint8_t OccupancyTrajectory::at_index(std::size_t ring_index, int site) const {
  const auto& window = initial_.window;
  if (!window.contains_site(site)) throw config_error("OccupancyTrajectory: site outside window");
  if (route_ == Route::stirring) {
    return initial_.at(stirring_->label_at_site_at_index(site, ring_index));
  }
  if (ring_index > log_->rings.size()) throw config_error("OccupancyTrajectory: index out of range");
  // Pull the site backwards through the swaps to the nearest snapshot.
  const std::size_t snap = ring_index / stride_;
  int pos = site;
  for (std::size_t i = ring_index; i > snap * stride_; --i) {
    const std::int32_t b = log_->rings[i - 1].bond;
    if (pos == b) {
      pos = b + 1;
    } else if (pos == b + 1) {
      pos = b;
    }
  }
  return snaps_[snap][window.site_index(pos)];
}

std::uint8_t OccupancyTrajectory::at(double t, int site) const {
  return at_index(index_at(t), site);
}

core::Configuration OccupancyTrajectory::occupancy_at_index(std::size_t ring_index) const {
  const auto& window = initial_.window;
  core::Configuration config(window);
  if (route_ == Route::stirring) {
    const auto inv = stirring_->inverse_map_at_index(ring_index);
    for (std::size_t i = 0; i < inv.size(); ++i) {
      config.occ[i] = initial_.at(inv[i]);
    }
    return config;
  }
  if (ring_index > log_->rings.size()) throw config_error("OccupancyTrajectory: index out of range");
  const std::size_t snap = ring_index / stride_;
  config.occ = snaps_[snap];
  for (std::size_t i = snap * stride_; i < ring_index; ++i) {
    const std::size_t xi = window.site_index(log_->rings[i].bond);
    std::swap(config.occ[xi], config.occ[xi + 1]);
  }
  return config;
}

core::Configuration OccupancyTrajectory::occupancy(double t) const {
  return occupancy_at_index(index_at(t));
}

OccupancyTrajectory exclusion_from_stirring(const graphical::StirringTrajectory* stirring,
                                            const core::Configuration& initial) {
  return OccupancyTrajectory::from_stirring(stirring, initial);
}

OccupancyTrajectory direct_exclusion(const core::Configuration& initial,
                                     const graphical::EventLog* log) {
  return OccupancyTrajectory::direct(initial, log);
}

// ----- frame process ---------------------------------------------------------

namespace {

// Ring buffer over frame sites; base tracks which cell holds the left edge.
struct FrameBuffer {
  const core::LatticeWindow window;
  std::vector<std::uint8_t> cells;
  std::size_t base = 0;

  explicit FrameBuffer(const core::Configuration& config)
      : window(config.window), cells(config.occ) {}

  std::size_t cell_index(int site) const {
    return (base + window.site_index(site)) % cells.size();
  }
  std::uint8_t at(int site) const { return cells[cell_index(site)]; }
  void set(int site, bool v) { cells[cell_index(site)] = v ? 1 : 0; }
  void swap_sites(int a, int b) { std::swap(cells[cell_index(a)], cells[cell_index(b)]); }
  // Move the frame one step right/left; the vacated cell becomes the new far
  // edge and must be refilled by the caller.
  void shift_right() { base = (base + 1) % cells.size(); }
  void shift_left() { base = (base + cells.size() - 1) % cells.size(); }

  core::Configuration to_config() const {
    core::Configuration config(window);
    for (int x = window.lo; x <= window.hi; ++x) config.set(x, at(x) != 0);
    return config;
  }
};

}  // namespace

LagrangianTrajectory evolve_lagrangian_from(core::Configuration initial_frame, core::Density rho,
                                            double horizon, std::uint64_t replicate_key) {
  const core::LatticeWindow frame = initial_frame.window;
  if (!frame.symmetric() || frame.half_width() < 2) {
    throw config_error("evolve_lagrangian: frame must be symmetric with half-width >= 2");
  }
  if (initial_frame.at(0) == 0) {
    throw invariant_violation("evolve_lagrangian: frame origin must be occupied");
  }
  if (!(horizon >= 0.0)) throw config_error("evolve_lagrangian: horizon must be >= 0");

  LagrangianTrajectory traj(frame, initial_frame, initial_frame);
  traj.horizon_ = horizon;

  FrameBuffer buffer(initial_frame);
  core::RngStream fill_stream(
      core::derive_key(replicate_key, core::StreamPurpose::frame_fill, 0));

  // Event sources: one clock per frame bond not incident to the origin, plus
  // two shift-candidate clocks.  Ties break on the smaller source id.
  const std::int32_t right_candidate = frame.hi + 1;
  const std::int32_t left_candidate = frame.hi + 2;
  using Entry = std::pair<double, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  std::vector<core::RngStream> streams;
  std::vector<std::int32_t> source_of;
  streams.reserve(static_cast<std::size_t>(frame.bond_count()) + 2);
  auto add_source = [&](std::int32_t id, core::RngStream stream) {
    const double t = stream.exponential(0.5);
    streams.push_back(std::move(stream));
    source_of.push_back(id);
    if (t <= horizon) queue.emplace(t, static_cast<std::int32_t>(streams.size() - 1));
  };
  // The queue must order by (time, source id), so push stream slots in id
  // order and keep a parallel map from slot to id; ids are already ascending.
  for (int b = frame.lo; b < frame.hi; ++b) {
    if (b == -1 || b == 0) continue;
    add_source(b, core::RngStream(core::derive_key(
                      replicate_key, core::StreamPurpose::frame_bond_clock, b)));
  }
  add_source(right_candidate,
             core::RngStream(core::derive_key(replicate_key,
                                              core::StreamPurpose::frame_shift_clock, 0)));
  add_source(left_candidate,
             core::RngStream(core::derive_key(replicate_key,
                                              core::StreamPurpose::frame_shift_clock, 1)));

  auto integrand = [&]() { return 0.5 * (static_cast<double>(buffer.at(-1)) - buffer.at(1)); };

  traj.drift_times_.push_back(0.0);
  traj.drift_cum_.push_back(0.0);
  traj.drift_rate_.push_back(integrand());
  std::int64_t net = 0;

  while (!queue.empty()) {
    const auto [t, slot] = queue.top();
    queue.pop();
    const std::int32_t id = source_of[static_cast<std::size_t>(slot)];

    if (id == right_candidate || id == left_candidate) {
      const int dir = id == right_candidate ? +1 : -1;
      if (buffer.at(dir) == 0) {
        // Accepted move: tagged particle steps to the empty neighbour, frame
        // re-centers, fresh occupancy enters at the far edge.
        buffer.swap_sites(0, dir);
        if (dir > 0) {
          buffer.shift_right();
          buffer.set(frame.hi, fill_stream.bernoulli(rho));
        } else {
          buffer.shift_left();
          buffer.set(frame.lo, fill_stream.bernoulli(rho));
        }
        net += dir;
        traj.shift_times_.push_back(t);
        traj.shift_signs_.push_back(static_cast<std::int8_t>(dir));
        traj.shift_prefix_.push_back(net);
      }
    } else {
      buffer.swap_sites(id, id + 1);
    }
    if (buffer.at(0) == 0) {
      throw invariant_violation("evolve_lagrangian: tagged origin vacated");
    }
    const double rate = integrand();
    if (rate != traj.drift_rate_.back()) {
      const double cum = traj.drift_cum_.back() +
                         traj.drift_rate_.back() * (t - traj.drift_times_.back());
      traj.drift_times_.push_back(t);
      traj.drift_cum_.push_back(cum);
      traj.drift_rate_.push_back(rate);
    }

    auto& stream = streams[static_cast<std::size_t>(slot)];
    double next = t + stream.exponential(0.5);
    if (next <= t) next = std::nextafter(t, std::numeric_limits<double>::infinity());
    if (next <= horizon) queue.emplace(next, slot);
  }

  traj.final_frame_ = buffer.to_config();
  return traj;
}

LagrangianTrajectory evolve_lagrangian(core::Density rho, double horizon,
                                       std::uint64_t replicate_key, double window_delta) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw config_error("evolve_lagrangian: rho must lie strictly inside (0, 1)");
  }
  const int hw = graphical::window_halfwidth(horizon, window_delta);
  const core::LatticeWindow frame(hw);
  const std::uint64_t config_key =
      core::derive_key(replicate_key, core::StreamPurpose::frame_config, 0);
  core::Configuration initial = core::sample_config(frame, rho, config_key);
  initial.set(0, true);  // stationary law conditioned on an occupied origin
  return evolve_lagrangian_from(std::move(initial), rho, horizon, replicate_key);
}

std::size_t LagrangianTrajectory::shift_index_at(double t) const {
  if (!(t >= 0.0) || t > horizon_) {
    throw config_error("LagrangianTrajectory: query time outside [0, horizon]");
  }
  const auto it = std::upper_bound(shift_times_.begin(), shift_times_.end(), t);
  return static_cast<std::size_t>(it - shift_times_.begin());
}

std::int64_t LagrangianTrajectory::displacement(double t) const {
  const std::size_t k = shift_index_at(t);
  return k == 0 ? 0 : shift_prefix_[k - 1];
}

std::int64_t LagrangianTrajectory::jumps_right(double t) const {
  const std::size_t k = shift_index_at(t);
  std::int64_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += shift_signs_[i] > 0;
  return n;
}

std::int64_t LagrangianTrajectory::jumps_left(double t) const {
  const std::size_t k = shift_index_at(t);
  return static_cast<std::int64_t>(k) - jumps_right(t);
}

double LagrangianTrajectory::drift(double t) const {
  if (!(t >= 0.0) || t > horizon_) {
    throw config_error("LagrangianTrajectory: query time outside [0, horizon]");
  }
  const auto it = std::upper_bound(drift_times_.begin(), drift_times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - drift_times_.begin()) - 1;
  return drift_cum_[i] + drift_rate_[i] * (t - drift_times_[i]);
}

}  // namespace sseplab::dynamics
