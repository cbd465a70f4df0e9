#include "sseplab/observables.hpp"

#include <algorithm>
#include <string>

namespace sseplab::observables {

// ----- current ---------------------------------------------------------------

std::size_t CurrentPath::jump_index_at(double t) const {
  if (!(t >= 0.0) || t > horizon) throw config_error("CurrentPath: query time outside [0, horizon]");
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  return static_cast<std::size_t>(it - jump_times.begin());
}

std::int64_t CurrentPath::value(double t) const {
  const std::size_t k = jump_index_at(t);
  return k == 0 ? 0 : jump_prefix[k - 1];
}

std::int64_t CurrentPath::positive_count(double t) const {
  const std::size_t k = jump_index_at(t);
  std::int64_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += jump_signs[i] > 0;
  return n;
}

std::int64_t CurrentPath::negative_count(double t) const {
  const std::size_t k = jump_index_at(t);
  return static_cast<std::int64_t>(k) - positive_count(t);
}

std::vector<std::int64_t> CurrentPath::integer_values(int upto) const {
  if (upto < 0 || static_cast<double>(upto) > horizon) {
    throw config_error("CurrentPath: integer range outside horizon");
  }
  std::vector<std::int64_t> values(static_cast<std::size_t>(upto) + 1, 0);
  std::size_t j = 0;
  std::int64_t running = 0;
  for (int i = 0; i <= upto; ++i) {
    while (j < jump_times.size() && jump_times[j] <= static_cast<double>(i)) {
      running = jump_prefix[j];
      ++j;
    }
    values[static_cast<std::size_t>(i)] = running;
  }
  return values;
}

CurrentPath current(const dynamics::OccupancyTrajectory& occupancy) {
  const auto& window = occupancy.window();
  if (!window.contains_bond(0)) throw config_error("current: window must contain the bond (0, 1)");
  const auto& log = occupancy.log();
  CurrentPath path;
  path.horizon = log.horizon;
  std::int64_t running = 0;
  for (std::size_t g = 0; g < log.rings.size(); ++g) {
    if (log.rings[g].bond != 0) continue;
    const std::uint8_t left = occupancy.at_index(g, 0);
    const std::uint8_t right = occupancy.at_index(g, 1);
    if (left == right) continue;
    const std::int8_t sign = left > right ? +1 : -1;
    running += sign;
    path.jump_times.push_back(log.rings[g].time);
    path.jump_signs.push_back(sign);
    path.jump_prefix.push_back(running);
  }
  return path;
}

// ----- decomposition ---------------------------------------------------------

double Decomposition::drift(double t) const {
  if (!(t >= 0.0) || t > path->horizon) throw config_error("Decomposition: query time outside [0, horizon]");
  const auto it = std::upper_bound(break_times.begin(), break_times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - break_times.begin()) - 1;
  return cum_integral[i] + rate_after[i] * (t - break_times[i]);
}

Decomposition decompose(const CurrentPath& path, const dynamics::OccupancyTrajectory& occupancy) {
  const auto& window = occupancy.window();
  if (!window.contains_bond(0)) throw config_error("decompose: window must contain the bond (0, 1)");
  const auto& log = occupancy.log();

  Decomposition dec;
  dec.path = &path;
  dec.break_times.push_back(0.0);
  dec.cum_integral.push_back(0.0);
  dec.rate_after.push_back(
      0.5 * (static_cast<double>(occupancy.initial().at(0)) - occupancy.initial().at(1)));

  // The integrand (eta(0) - eta(1))/2 changes only at rings of bonds touching
  // sites 0 or 1.
  for (std::size_t g = 0; g < log.rings.size(); ++g) {
    const std::int32_t b = log.rings[g].bond;
    if (b < -1 || b > 1) continue;
    const double rate =
        0.5 * (static_cast<double>(occupancy.at_index(g + 1, 0)) - occupancy.at_index(g + 1, 1));
    if (rate == dec.rate_after.back()) continue;
    const double t = log.rings[g].time;
    const double cum =
        dec.cum_integral.back() + dec.rate_after.back() * (t - dec.break_times.back());
    dec.break_times.push_back(t);
    dec.cum_integral.push_back(cum);
    dec.rate_after.push_back(rate);
  }
  return dec;
}

// ----- crossing counts and variables ------------------------------------------

KCounts k_counts(const graphical::StirringTrajectory& stirring, double t) {
  const auto& window = stirring.window();
  const auto fwd = stirring.forward_map(t);
  KCounts counts;
  for (int label = window.lo; label <= window.hi; ++label) {
    const std::int32_t pos = fwd[window.site_index(label)];
    if (label <= 0 && pos > 0) ++counts.k_plus;
    if (label > 0 && pos <= 0) ++counts.k_minus;
  }
  return counts;
}

std::vector<std::int8_t> CrossingVariables::differences() const {
  if (left_labels.size() != right_labels.size()) {
    throw invariant_violation("CrossingVariables: left/right crossing counts differ");
  }
  std::vector<std::int8_t> diff(left_labels.size());
  for (std::size_t k = 0; k < diff.size(); ++k) {
    diff[k] = static_cast<std::int8_t>(left_occupied[k] - right_occupied[k]);
  }
  return diff;
}

std::int64_t CrossingVariables::sum() const {
  std::int64_t s = 0;
  for (const std::int8_t d : differences()) s += d;
  return s;
}

CrossingVariables crossing_variables(const graphical::StirringTrajectory& stirring,
                                     const core::Configuration& initial, double t) {
  const auto& window = stirring.window();
  if (!(initial.window == window)) throw config_error("crossing_variables: window mismatch");
  const auto fwd = stirring.forward_map(t);
  CrossingVariables cv;
  for (int label = window.lo; label <= 0 && label <= window.hi; ++label) {
    if (fwd[window.site_index(label)] > 0) {
      cv.left_labels.push_back(label);
      cv.left_occupied.push_back(initial.at(label));
    }
  }
  for (int label = 1; label <= window.hi; ++label) {
    if (fwd[window.site_index(label)] <= 0) {
      cv.right_labels.push_back(label);
      cv.right_occupied.push_back(initial.at(label));
    }
  }
  return cv;
}

// ----- tagged particle ---------------------------------------------------------

TaggedPath::TaggedPath(int start, const dynamics::OccupancyTrajectory* occupancy)
    : start_(start), occupancy_(occupancy) {
  const auto& window = occupancy->window();
  const auto& initial = occupancy->initial();
  if (!window.contains_site(start) || !initial.at(start)) {
    throw config_error("TaggedPath: start site must be occupied inside the window");
  }
  std::vector<std::uint8_t> occ = initial.occ;
  int pos = start;
  for (const auto& ring : occupancy->log().rings) {
    const std::int32_t b = ring.bond;
    if (!window.contains_bond(b)) continue;
    const std::size_t i = window.site_index(b);
    const std::size_t j = i + 1;
    if (pos == b && !occ[j]) {
      pos = b + 1;
      move_times_.push_back(ring.time);
      move_positions_.push_back(pos);
    } else if (pos == b + 1 && !occ[i]) {
      pos = b;
      move_times_.push_back(ring.time);
      move_positions_.push_back(pos);
    }
    std::swap(occ[i], occ[j]);
  }
}

int TaggedPath::position(double t) const {
  if (!(t >= 0.0) || t > occupancy_->horizon()) {
    throw config_error("TaggedPath: query time outside [0, horizon]");
  }
  const auto it = std::upper_bound(move_times_.begin(), move_times_.end(), t);
  if (it == move_times_.begin()) return start_;
  return move_positions_[static_cast<std::size_t>(it - move_times_.begin()) - 1];
}

std::vector<int> ranked_positions(const core::Configuration& occupancy, std::int64_t n_lo,
                                  std::int64_t n_hi) {
  if (n_lo > n_hi) throw config_error("ranked_positions: empty rank range");
  const auto& window = occupancy.window;
  std::vector<int> result(static_cast<std::size_t>(n_hi - n_lo + 1), 0);
  if (n_hi >= 1) {
    std::int64_t rank = 0;
    for (int x = 1; x <= window.hi; ++x) {
      if (!occupancy.at(x)) continue;
      ++rank;
      if (rank >= std::max<std::int64_t>(n_lo, 1) && rank <= n_hi) {
        result[static_cast<std::size_t>(rank - n_lo)] = x;
      }
      if (rank >= n_hi) break;
    }
    if (rank < n_hi) {
      throw config_error("ranked_positions: rank " + std::to_string(n_hi) +
                         " beyond window capacity");
    }
  }
  if (n_lo <= 0) {
    std::int64_t found = 0;  // rank n <= 0 is the (1+|n|)-th particle at sites <= 0
    for (int x = 0; x >= window.lo; --x) {
      if (!occupancy.at(x)) continue;
      ++found;
      const std::int64_t n = 1 - found;  // 0, -1, -2, ...
      if (n <= std::min<std::int64_t>(n_hi, 0) && n >= n_lo) {
        result[static_cast<std::size_t>(n - n_lo)] = x;
      }
      if (n <= n_lo) break;
    }
    if (1 - found > n_lo) {
      throw config_error("ranked_positions: rank " + std::to_string(n_lo) +
                         " beyond window capacity");
    }
  }
  return result;
}

int TaggedPath::ranked_position(std::int64_t n, double t) const {
  const core::Configuration config = occupancy_->occupancy(t);
  return ranked_positions(config, n, n)[0];
}

std::optional<TaggedPath> tagged_path(const graphical::StirringTrajectory& stirring,
                                      const dynamics::OccupancyTrajectory& occupancy) {
  const auto& window = occupancy.window();
  if (!(stirring.window() == window)) throw config_error("tagged_path: window mismatch");
  if (!window.contains_site(0)) throw config_error("tagged_path: window must contain site 0");
  const auto& initial = occupancy.initial();
  for (int x = 0; x >= window.lo; --x) {
    if (initial.at(x)) return TaggedPath(x, &occupancy);
  }
  return std::nullopt;
}

// ----- spacings -----------------------------------------------------------------

std::vector<int> spacings(const dynamics::OccupancyTrajectory& occupancy, double t,
                          std::int64_t i_lo, std::int64_t i_hi) {
  if (i_lo > i_hi) throw config_error("spacings: empty index range");
  const core::Configuration config = occupancy.occupancy(t);
  const auto ranked = ranked_positions(config, i_lo, i_hi + 1);
  std::vector<int> result;
  result.reserve(static_cast<std::size_t>(i_hi - i_lo + 1));
  for (std::int64_t i = i_lo; i <= i_hi; ++i) {
    if (i == 0) continue;
    const std::size_t k = static_cast<std::size_t>(i - i_lo);
    result.push_back(ranked[k + 1] - ranked[k]);
  }
  return result;
}

}  // namespace sseplab::observables
