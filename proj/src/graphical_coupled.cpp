#include <cstdint>
#include <vector>

#include "sseplab/core.hpp"
#include "sseplab/dynamics.hpp"
#include "sseplab/graphical.hpp"
#include "sseplab/observables.hpp"

namespace sseplab::graphical {

namespace {

struct PipelineReadings {
  std::vector<std::int64_t> current;
  std::vector<std::int64_t> tagged;
  std::vector<std::int64_t> crossings;

  friend bool operator==(const PipelineReadings&, const PipelineReadings&) = default;
};

// One replicate of the full observable pipeline at a given half-width.  The
// initial-configuration attempt loop mirrors the production ensemble: attempt
// indices advance until a tagged particle exists at a site <= 0.
PipelineReadings run_pipeline(int halfwidth, core::Density rho, double horizon,
                              const std::vector<double>& times, std::uint64_t replicate_key) {
  const core::LatticeWindow window(halfwidth);
  const StirringTrajectory stirring(window, generate_events(window, horizon, replicate_key));

  for (std::int64_t attempt = 0;; ++attempt) {
    const std::uint64_t config_key =
        core::derive_key(replicate_key, core::StreamPurpose::init_attempt, attempt);
    const core::Configuration initial = core::sample_config(window, rho, config_key);
    const dynamics::OccupancyTrajectory occupancy =
        dynamics::exclusion_from_stirring(&stirring, initial);
    const auto tagged = observables::tagged_path(stirring, occupancy);
    if (!tagged.has_value()) continue;

    const observables::CurrentPath path = observables::current(occupancy);
    PipelineReadings readings;
    readings.current.reserve(times.size());
    readings.tagged.reserve(times.size());
    readings.crossings.reserve(times.size());
    for (const double t : times) {
      readings.current.push_back(path.value(t));
      readings.tagged.push_back(tagged->position(t));
      readings.crossings.push_back(observables::k_counts(stirring, t).k_plus);
    }
    return readings;
  }
}

}  // namespace

CoupledCheckReport coupled_window_check(const CoupledCheckSpec& spec) {
  if (spec.replicates <= 0) throw config_error("coupled_window_check: replicates must be positive");
  if (!(spec.horizon > 0.0)) throw config_error("coupled_window_check: horizon must be positive");
  for (const double t : spec.times) {
    if (!(t >= 0.0) || t > spec.horizon) {
      throw config_error("coupled_window_check: query times must lie in [0, horizon]");
    }
  }
  const core::Density rho(spec.rho);

  CoupledCheckReport report;
  report.halfwidth = spec.forced_halfwidth > 0
                         ? spec.forced_halfwidth
                         : window_halfwidth(spec.horizon, spec.window_delta);
  report.halfwidth_reference = 2 * report.halfwidth;
  report.replicates = spec.replicates;

  for (int r = 0; r < spec.replicates; ++r) {
    const std::uint64_t replicate_key =
        core::derive_key(spec.seed, core::StreamPurpose::replicate, r);
    const PipelineReadings small =
        run_pipeline(report.halfwidth, rho, spec.horizon, spec.times, replicate_key);
    const PipelineReadings big =
        run_pipeline(report.halfwidth_reference, rho, spec.horizon, spec.times, replicate_key);
    if (!(small == big)) {
      ++report.disagreements;
      report.disagreeing_replicates.push_back(r);
    }
  }
  return report;
}

}  // namespace sseplab::graphical
