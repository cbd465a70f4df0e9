#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sseplab/core.hpp"
#include "sseplab/dynamics.hpp"
#include "sseplab/graphical.hpp"
#include "sseplab/observables.hpp"

using namespace sseplab;
using namespace sseplab::core;
using namespace sseplab::observables;
using sseplab::dynamics::OccupancyTrajectory;
using sseplab::graphical::StirringTrajectory;

namespace {

struct Replicate {
  StirringTrajectory stirring;
  Configuration initial;
  OccupancyTrajectory occupancy;

  Replicate(const LatticeWindow& w, double horizon, std::uint64_t key, double rho)
      : stirring(w, graphical::generate_events(w, horizon, key)),
        initial(sample_config(w, Density(rho), derive_key(key, StreamPurpose::init_attempt, 0))),
        occupancy(dynamics::exclusion_from_stirring(&stirring, initial)) {}
};

}  // namespace

TEST_CASE("current equals net occupancy transport into the right half") {
  // With a closed boundary, every particle now right of the origin bond that
  // started left of it crossed it, so J(t) = sum_{x>=1} (eta_t(x) - eta_0(x)).
  const LatticeWindow w(14);
  for (int r = 0; r < 10; ++r) {
    const Replicate rep(w, 7.0, derive_key(401, StreamPurpose::replicate, r), 0.5);
    const CurrentPath path = current(rep.occupancy);
    for (double t : {0.0, 1.3, 4.4, 7.0}) {
      const Configuration now = rep.occupancy.occupancy(t);
      std::int64_t transport = 0;
      for (int x = 1; x <= w.hi; ++x) {
        transport += static_cast<std::int64_t>(now.at(x)) - rep.initial.at(x);
      }
      CHECK(path.value(t) == transport);
      CHECK(path.value(t) == path.positive_count(t) - path.negative_count(t));
    }
  }
}

TEST_CASE("current jumps are unit steps at origin-bond rings only") {
  const LatticeWindow w(10);
  const Replicate rep(w, 6.0, derive_key(402, StreamPurpose::replicate, 0), 0.4);
  const CurrentPath path = current(rep.occupancy);
  for (std::size_t i = 0; i < path.jump_times.size(); ++i) {
    CHECK((path.jump_signs[i] == 1 || path.jump_signs[i] == -1));
    if (i > 0) CHECK(path.jump_times[i - 1] < path.jump_times[i]);
  }
  const auto ints = path.integer_values(6);
  REQUIRE(ints.size() == 7);
  for (int t = 0; t <= 6; ++t) {
    CHECK(ints[static_cast<std::size_t>(t)] == path.value(static_cast<double>(t)));
  }
}

TEST_CASE("drift reintegrates the occupancy imbalance between rings") {
  const LatticeWindow w(9);
  for (int r = 0; r < 6; ++r) {
    const Replicate rep(w, 5.0, derive_key(403, StreamPurpose::replicate, r), 0.5);
    const CurrentPath path = current(rep.occupancy);
    const Decomposition dec = decompose(path, rep.occupancy);
    const auto& rings = rep.stirring.log().rings;
    for (double t : {0.8, 2.9, 5.0}) {
      // Independent O(E) reintegration over the inter-ring intervals.
      double integral = 0.0;
      double prev = 0.0;
      std::size_t m = 0;
      for (; m < rings.size() && rings[m].time <= t; ++m) {
        const double rate =
            0.5 * (static_cast<double>(rep.occupancy.at_index(m, 0)) - rep.occupancy.at_index(m, 1));
        integral += rate * (rings[m].time - prev);
        prev = rings[m].time;
      }
      const double tail_rate =
          0.5 * (static_cast<double>(rep.occupancy.at_index(m, 0)) - rep.occupancy.at_index(m, 1));
      integral += tail_rate * (t - prev);
      CHECK(dec.drift(t) == doctest::Approx(integral).epsilon(1e-12));
      // Exact decomposition J = M + A.
      CHECK(static_cast<double>(path.value(t)) ==
            doctest::Approx(dec.martingale(t) + dec.drift(t)).epsilon(1e-12));
    }
  }
}

TEST_CASE("left and right crossing counts coincide pathwise") {
  const LatticeWindow w(16);
  for (int r = 0; r < 12; ++r) {
    const Replicate rep(w, 9.0, derive_key(404, StreamPurpose::replicate, r), 0.5);
    for (double t : {0.5, 3.0, 9.0}) {
      const KCounts k = k_counts(rep.stirring, t);
      CHECK(k.k_plus == k.k_minus);
    }
  }
}

TEST_CASE("current equals the sum of crossing variables") {
  const LatticeWindow w(16);
  for (int r = 0; r < 12; ++r) {
    const Replicate rep(w, 9.0, derive_key(405, StreamPurpose::replicate, r), 0.35);
    const CurrentPath path = current(rep.occupancy);
    for (double t : {0.7, 4.0, 9.0}) {
      const CrossingVariables cv = crossing_variables(rep.stirring, rep.initial, t);
      const KCounts k = k_counts(rep.stirring, t);
      CHECK(static_cast<std::int64_t>(cv.count()) == k.k_plus);
      CHECK(cv.sum() == path.value(t));
      // Label lists are ordered and on the correct sides.
      for (std::size_t i = 0; i < cv.left_labels.size(); ++i) {
        CHECK(cv.left_labels[i] <= 0);
        CHECK(cv.right_labels[i] >= 1);
        if (i > 0) {
          CHECK(cv.left_labels[i - 1] < cv.left_labels[i]);
          CHECK(cv.right_labels[i - 1] < cv.right_labels[i]);
        }
      }
      for (const std::int8_t d : cv.differences()) CHECK((d >= -1 && d <= 1));
    }
  }
}

TEST_CASE("crossing variables take values +-1 with frequency rho(1-rho) each") {
  // At a fixed time, eta_0(i_k) and eta_0(j_k) are independent Bernoulli(rho)
  // given the stirring, so A_k = +1 and A_k = -1 each occur w.p. rho(1-rho).
  const double rho = 0.3;
  const LatticeWindow w(graphical::window_halfwidth(4.0, 1e-9));
  int plus = 0, minus = 0, total = 0;
  for (int r = 0; r < 1500; ++r) {
    const Replicate rep(w, 4.0, derive_key(406, StreamPurpose::replicate, r), rho);
    const CrossingVariables cv = crossing_variables(rep.stirring, rep.initial, 4.0);
    for (const std::int8_t d : cv.differences()) {
      ++total;
      if (d == 1) ++plus;
      if (d == -1) ++minus;
    }
  }
  // E[K(4)] ~ 0.77 per replicate, so roughly 1150 pooled variables.
  REQUIRE(total > 800);
  const double p = rho * (1.0 - rho);  // 0.21
  const double band = 4.0 * std::sqrt(p * (1.0 - p) / total);
  CHECK(std::abs(static_cast<double>(plus) / total - p) < band);
  CHECK(std::abs(static_cast<double>(minus) / total - p) < band);
}

TEST_CASE("tagged particle: start convention and full-lattice fixed point") {
  const LatticeWindow w(8);
  const StirringTrajectory stirring(w, graphical::generate_events(
                                           w, 5.0, derive_key(407, StreamPurpose::replicate, 0)));
  // Start = largest occupied site <= 0.
  Configuration init(w);
  init.set(-3, true);
  init.set(-1, true);
  init.set(2, true);
  const OccupancyTrajectory occ = dynamics::exclusion_from_stirring(&stirring, init);
  const auto tagged = tagged_path(stirring, occ);
  REQUIRE(tagged.has_value());
  CHECK(tagged->start() == -1);
  CHECK(tagged->position(0.0) == -1);
  CHECK(tagged->displacement(0.0) == 0);

  // No particle at any site <= 0: resample signal.
  Configuration right_only(w);
  right_only.set(1, true);
  const OccupancyTrajectory occ2 = dynamics::exclusion_from_stirring(&stirring, right_only);
  CHECK_FALSE(tagged_path(stirring, occ2).has_value());

  // Fully occupied lattice: nobody can move.
  Configuration full(w);
  for (int x = w.lo; x <= w.hi; ++x) full.set(x, true);
  const OccupancyTrajectory occ3 = dynamics::exclusion_from_stirring(&stirring, full);
  const auto pinned = tagged_path(stirring, occ3);
  REQUIRE(pinned.has_value());
  CHECK(pinned->start() == 0);
  for (double t : {1.0, 3.0, 5.0}) CHECK(pinned->position(t) == 0);
}

TEST_CASE("tagged particle sits on an occupied site and preserves order") {
  const LatticeWindow w(14);
  for (int r = 0; r < 10; ++r) {
    const Replicate rep(w, 7.0, derive_key(408, StreamPurpose::replicate, r), 0.5);
    const auto tagged = tagged_path(rep.stirring, rep.occupancy);
    if (!tagged.has_value()) continue;
    // Count particles strictly left of the tagged one: conserved over time.
    const Configuration start_config = rep.occupancy.occupancy(0.0);
    std::int64_t left0 = 0;
    for (int x = w.lo; x < tagged->start(); ++x) left0 += start_config.at(x);
    for (double t : {0.9, 3.3, 7.0}) {
      const int pos = tagged->position(t);
      const Configuration c = rep.occupancy.occupancy(t);
      REQUIRE(c.at(pos) == 1);
      std::int64_t left = 0;
      for (int x = w.lo; x < pos; ++x) left += c.at(x);
      CHECK(left == left0);
    }
  }
}

TEST_CASE("tagged position equals the current-ranked particle position") {
  const LatticeWindow w(16);
  int checked = 0;
  for (int r = 0; r < 25; ++r) {
    const Replicate rep(w, 8.0, derive_key(409, StreamPurpose::replicate, r), 0.5);
    const auto tagged = tagged_path(rep.stirring, rep.occupancy);
    if (!tagged.has_value()) continue;
    const CurrentPath path = current(rep.occupancy);
    for (double t : {0.0, 0.6, 2.1, 5.5, 8.0}) {
      const std::int64_t j = path.value(t);
      CHECK(tagged->position(t) == tagged->ranked_position(j, t));
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("lone walker: current indicates which side it is on") {
  const LatticeWindow w(18);
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t key = derive_key(410, StreamPurpose::replicate, r);
    const StirringTrajectory stirring(w, graphical::generate_events(w, 6.0, key));
    Configuration init(w);
    init.set(0, true);
    const OccupancyTrajectory occ = dynamics::exclusion_from_stirring(&stirring, init);
    const CurrentPath path = current(occ);
    const auto tagged = tagged_path(stirring, occ);
    REQUIRE(tagged.has_value());
    for (double t : {0.5, 2.0, 6.0}) {
      const int pos = tagged->position(t);
      CHECK(path.value(t) == (pos > 0 ? 1 : 0));
    }
  }
}

TEST_CASE("ranked positions: ordering, spacing floor, and capacity errors") {
  const LatticeWindow w(12);
  Configuration c(w);
  for (int x : {-11, -7, -2, 0, 3, 4, 9}) c.set(x, true);
  // Ranks ... Y_{-2}=-7, Y_{-1}=-2, Y_0=0 | Y_1=3, Y_2=4, Y_3=9.
  const auto ranked = ranked_positions(c, -3, 3);
  CHECK(ranked == std::vector<int>{-11, -7, -2, 0, 3, 4, 9});
  for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1] < ranked[i]);
  CHECK_THROWS_AS(ranked_positions(c, -4, 0), config_error);
  CHECK_THROWS_AS(ranked_positions(c, 1, 4), config_error);
  CHECK_THROWS_AS(ranked_positions(c, 2, 1), config_error);

  Configuration empty_left(w);
  empty_left.set(5, true);
  CHECK_THROWS_AS(ranked_positions(empty_left, 0, 0), config_error);
  CHECK(ranked_positions(empty_left, 1, 1) == std::vector<int>{5});
}

TEST_CASE("spacings skip the straddling index and are at least one") {
  const LatticeWindow w(15);
  for (int r = 0; r < 8; ++r) {
    const Replicate rep(w, 5.0, derive_key(411, StreamPurpose::replicate, r), 0.6);
    for (double t : {0.0, 2.5, 5.0}) {
      const auto d = spacings(rep.occupancy, t, -3, 2);
      REQUIRE(d.size() == 5);  // i in {-3,-2,-1,1,2}
      for (int v : d) CHECK(v >= 1);
      // Cross-check against ranked positions.
      const auto y = ranked_positions(rep.occupancy.occupancy(t), -3, 3);
      CHECK(d[0] == y[1] - y[0]);
      CHECK(d[1] == y[2] - y[1]);
      CHECK(d[2] == y[3] - y[2]);
      CHECK(d[3] == y[5] - y[4]);
      CHECK(d[4] == y[6] - y[5]);
    }
  }
}

TEST_CASE("spacings and gap around the origin are geometric at equilibrium") {
  // {d_i : i != 0}, Y_1 and |Y_0|+1 are independent Geometric(rho).  Pool
  // d_1 over replicates at a positive time and compare the first pmf cells.
  const double rho = 0.5;
  const double t = 3.0;
  const LatticeWindow w(graphical::window_halfwidth(t, 1e-9));
  std::vector<int> hist(9, 0);
  std::vector<int> y1_hist(9, 0);
  std::vector<int> y0_hist(9, 0);
  int n = 0;
  for (int r = 0; r < 1200; ++r) {
    const Replicate rep(w, t, derive_key(412, StreamPurpose::replicate, r), rho);
    const auto d = spacings(rep.occupancy, t, 1, 1);
    const auto y = ranked_positions(rep.occupancy.occupancy(t), 0, 1);
    ++n;
    if (d[0] <= 8) ++hist[static_cast<std::size_t>(d[0])];
    if (y[1] <= 8) ++y1_hist[static_cast<std::size_t>(y[1])];
    const int g = -y[0] + 1;
    if (g <= 8) ++y0_hist[static_cast<std::size_t>(g)];
  }
  for (int k = 1; k <= 4; ++k) {
    const double p = rho * std::pow(1.0 - rho, k - 1);
    const double band = 4.0 * std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(static_cast<double>(hist[static_cast<std::size_t>(k)]) / n - p) < band);
    CHECK(std::abs(static_cast<double>(y1_hist[static_cast<std::size_t>(k)]) / n - p) < band);
    CHECK(std::abs(static_cast<double>(y0_hist[static_cast<std::size_t>(k)]) / n - p) < band);
  }
}
