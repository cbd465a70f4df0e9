#include "sseplab/core.hpp"

#include <cmath>
#include <utility>

namespace sseplab::core {

Configuration sample_config(const LatticeWindow& window, Density rho, std::uint64_t config_key) {
  Configuration config(window);
  for (int x = window.lo; x <= window.hi; ++x) {
    const std::uint64_t h = fold_key(config_key, zigzag(x));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    config.set(x, u < rho);
  }
  return config;
}

void exchange(Configuration& config, int bond) {
  if (!config.window.contains_bond(bond)) {
    throw invariant_violation("exchange: bond (" + std::to_string(bond) + ", " +
                              std::to_string(bond + 1) + ") outside window");
  }
  const std::size_t i = config.window.site_index(bond);
  std::swap(config.occ[i], config.occ[i + 1]);
}

int sample_geometric(Density rho, RngStream& stream) {
  const double r = rho;
  if (r <= 0.0) throw config_error("sample_geometric: rho must be positive");
  if (r >= 1.0) return 1;
  const double u = stream.uniform01();
  // Inversion: k-1 = floor(log(1-u) / log(1-rho)).
  const double q = std::log1p(-u) / std::log1p(-r);
  return 1 + static_cast<int>(q);
}

}  // namespace sseplab::core
