#include "sseplab/graphical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <queue>
#include <utility>

namespace sseplab::graphical {

int window_halfwidth(double t_max, double delta) {
  if (!(t_max >= 0.0)) throw config_error("window_halfwidth: t_max must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw config_error("window_halfwidth: delta must lie in (0, 1)");
  const int margin = static_cast<int>(std::ceil(6.0 * std::sqrt(t_max + 1.0))) + 10;
  if (t_max == 0.0) return margin;
  // 2*exp(W - t - W*log(W/t)) is the crossing bound; it is valid and strictly
  // decreasing on W > t, so scan the first integer past the horizon.
  int w = static_cast<int>(std::floor(t_max)) + 1;
  while (2.0 * std::exp(w - t_max - w * std::log(w / t_max)) >= delta) ++w;
  return w + margin;
}

namespace {

std::uint64_t bond_stream_key(std::uint64_t replicate_key, int bond) {
  return core::derive_key(replicate_key, core::StreamPurpose::bond_clock, bond);
}

// Mean-2 exponential gaps, i.e. a rate-1/2 Poisson clock.
double next_gap(core::RngStream& stream) { return stream.exponential(0.5); }

}  // namespace

ClockRing next_ring(std::uint64_t replicate_key, int bond, int k) {
  if (k < 1) throw config_error("next_ring: k is 1-indexed");
  core::RngStream stream(bond_stream_key(replicate_key, bond));
  double t = 0.0;
  for (int i = 0; i < k; ++i) {
    const double next = t + next_gap(stream);
    // Keep ring times strictly increasing even if a gap underflows the
    // resolution of the running sum.
    t = next > t ? next : std::nextafter(t, std::numeric_limits<double>::infinity());
  }
  return ClockRing{t, static_cast<std::int32_t>(bond)};
}

EventLog generate_events(const core::LatticeWindow& window, double horizon,
                         std::uint64_t replicate_key) {
  if (!(horizon >= 0.0)) throw config_error("generate_events: horizon must be >= 0");
  EventLog log{window, horizon, {}};
  const int nbonds = window.bond_count();
  std::vector<core::RngStream> streams;
  streams.reserve(nbonds);
  std::vector<double> last_time(static_cast<std::size_t>(nbonds), 0.0);

  using Entry = std::pair<double, std::int32_t>;  // (time, bond), min-first
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;

  for (int b = window.lo; b < window.hi; ++b) {
    streams.emplace_back(bond_stream_key(replicate_key, b));
    const double t = next_gap(streams.back());
    if (t <= horizon) queue.emplace(t, b);
  }
  log.rings.reserve(static_cast<std::size_t>(nbonds * horizon * 0.55) + 16);
  while (!queue.empty()) {
    const auto [t, b] = queue.top();
    queue.pop();
    log.rings.push_back(ClockRing{t, b});
    auto& stream = streams[static_cast<std::size_t>(b - window.lo)];
    double next = t + next_gap(stream);
    if (next <= t) next = std::nextafter(t, std::numeric_limits<double>::infinity());
    if (next <= horizon) queue.emplace(next, b);
  }
  return log;
}

StirringTrajectory evolve_stirring(const core::LatticeWindow& window, double horizon,
                                   std::uint64_t replicate_key) {
  return StirringTrajectory(window, generate_events(window, horizon, replicate_key));
}

StirringTrajectory::StirringTrajectory(const core::LatticeWindow& window, EventLog log)
    : window_(window), log_(std::move(log)) {
  if (!(log_.window == window_)) throw invariant_violation("StirringTrajectory: log/window mismatch");
  const std::size_t n = static_cast<std::size_t>(window_.site_count());
  const std::size_t events = log_.rings.size();
  stride_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(events, 1))))));

  std::vector<std::int32_t> fwd(n), inv(n);
  for (std::size_t i = 0; i < n; ++i) fwd[i] = inv[i] = window_.site_at(i);

  fwd_snaps_.push_back(fwd);
  inv_snaps_.push_back(inv);
  double prev_time = 0.0;
  for (std::size_t m = 0; m < events; ++m) {
    const ClockRing& ring = log_.rings[m];
    if (ring.time < prev_time) throw invariant_violation("StirringTrajectory: unsorted event log");
    prev_time = ring.time;
    const std::size_t xi = window_.site_index(ring.bond);
    const std::int32_t a = inv[xi], b = inv[xi + 1];
    std::swap(inv[xi], inv[xi + 1]);
    std::swap(fwd[window_.site_index(a)], fwd[window_.site_index(b)]);
    if ((m + 1) % stride_ == 0) {
      fwd_snaps_.push_back(fwd);
      inv_snaps_.push_back(inv);
    }
  }
}

std::size_t StirringTrajectory::index_at(double t) const {
  if (!(t >= 0.0) || t > log_.horizon) throw config_error("StirringTrajectory: query time outside [0, horizon]");
  const auto it = std::upper_bound(log_.rings.begin(), log_.rings.end(), t,
                                   [](double value, const ClockRing& r) { return value < r.time; });
  return static_cast<std::size_t>(it - log_.rings.begin());
}

int StirringTrajectory::position_of_label_at_index(int label, std::size_t m) const {
  if (!window_.contains_site(label)) throw config_error("position_of_label: label outside window");
  if (m > log_.rings.size()) throw config_error("position_of_label: ring index out of range");
  const std::size_t snap = m / stride_;
  int pos = fwd_snaps_[snap][window_.site_index(label)];
  for (std::size_t i = snap * stride_; i < m; ++i) {
    const std::int32_t b = log_.rings[i].bond;
    if (pos == b) {
      pos = b + 1;
    } else if (pos == b + 1) {
      pos = b;
    }
  }
  return pos;
}

int StirringTrajectory::label_at_site_at_index(int site, std::size_t m) const {
  if (!window_.contains_site(site)) throw config_error("label_at_site: site outside window");
  if (m > log_.rings.size()) throw config_error("label_at_site: ring index out of range");
  const std::size_t snap = m / stride_;
  // Pull the site backwards through the transpositions to the snapshot.
  int pos = site;
  for (std::size_t i = m; i > snap * stride_; --i) {
    const std::int32_t b = log_.rings[i - 1].bond;
    if (pos == b) {
      pos = b + 1;
    } else if (pos == b + 1) {
      pos = b;
    }
  }
  return inv_snaps_[snap][window_.site_index(pos)];
}

int StirringTrajectory::position_of_label(int label, double t) const {
  return position_of_label_at_index(label, index_at(t));
}

int StirringTrajectory::label_at_site(int site, double t) const {
  return label_at_site_at_index(site, index_at(t));
}

std::vector<std::int32_t> StirringTrajectory::forward_map_at_index(std::size_t m) const {
  if (m > log_.rings.size()) throw config_error("forward_map: ring index out of range");
  const std::size_t snap = m / stride_;
  std::vector<std::int32_t> fwd = fwd_snaps_[snap];
  std::vector<std::int32_t> inv = inv_snaps_[snap];
  for (std::size_t i = snap * stride_; i < m; ++i) {
    const std::size_t xi = window_.site_index(log_.rings[i].bond);
    const std::int32_t a = inv[xi], b = inv[xi + 1];
    std::swap(inv[xi], inv[xi + 1]);
    std::swap(fwd[window_.site_index(a)], fwd[window_.site_index(b)]);
  }
  return fwd;
}

std::vector<std::int32_t> StirringTrajectory::inverse_map_at_index(std::size_t m) const {
  if (m > log_.rings.size()) throw config_error("inverse_map: ring index out of range");
  const std::size_t snap = m / stride_;
  std::vector<std::int32_t> inv = inv_snaps_[snap];
  for (std::size_t i = snap * stride_; i < m; ++i) {
    const std::size_t xi = window_.site_index(log_.rings[i].bond);
    std::swap(inv[xi], inv[xi + 1]);
  }
  return inv;
}

std::vector<std::int32_t> StirringTrajectory::forward_map(double t) const {
  return forward_map_at_index(index_at(t));
}

std::vector<std::int32_t> StirringTrajectory::inverse_map(double t) const {
  return inverse_map_at_index(index_at(t));
}

// ----- binary event-log dump -------------------------------------------------

namespace {

void put_u64le(std::FILE* f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  if (std::fwrite(b, 1, 8, f) != 8) throw config_error("event log write failed");
}

void put_f64le(std::FILE* f, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64le(f, v);
}

void put_i32le(std::FILE* f, std::int32_t s) {
  const auto v = static_cast<std::uint32_t>(s);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  if (std::fwrite(b, 1, 4, f) != 4) throw config_error("event log write failed");
}

std::uint64_t get_u64le(std::FILE* f) {
  unsigned char b[8];
  if (std::fread(b, 1, 8, f) != 8) throw config_error("event log read failed");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64le(std::FILE* f) {
  const std::uint64_t v = get_u64le(f);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

std::int32_t get_i32le(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw config_error("event log read failed");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return static_cast<std::int32_t>(v);
}

}  // namespace

void write_event_log(const EventLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw config_error("cannot open for writing: " + path);
  try {
    put_u64le(f, log.rings.size());
    for (const ClockRing& r : log.rings) {
      put_f64le(f, r.time);
      put_i32le(f, r.bond);
    }
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw config_error("cannot close after writing: " + path);
}

EventLog read_event_log(const core::LatticeWindow& window, double horizon,
                        const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw config_error("cannot open for reading: " + path);
  EventLog log{window, horizon, {}};
  try {
    const std::uint64_t n = get_u64le(f);
    log.rings.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double t = get_f64le(f);
      const std::int32_t b = get_i32le(f);
      log.rings.push_back(ClockRing{t, b});
    }
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return log;
}

}  // namespace sseplab::graphical
