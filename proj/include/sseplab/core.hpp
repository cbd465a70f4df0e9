#pragma once
// Lattice geometry, occupancy configurations, and deterministic random streams.
//
// Every source of randomness in the project is a named stream derived
// statelessly from a master seed, a purpose tag, and an integer index.  Two
// runs with the same master seed replay bit-identical randomness regardless
// of scheduling, and streams for different (purpose, index) pairs are
// independent by construction.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sseplab {

// Broken internal contract (a pathwise identity, a map bijection, ...).
// The CLI maps this to exit code 3.
struct invariant_violation : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad user-facing input (spec file, CLI flags, parameter ranges).
// The CLI maps this to exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace core {

// Finite observation window of lattice sites.  The primary form is symmetric,
// sites -W..W with bonds (x, x+1) for -W <= x < W.  An asymmetric segment
// constructor exists so the exact finite-state references can drive the same
// engine on tiny systems (e.g. four sites around the origin bond).
struct LatticeWindow {
  int lo = 0;
  int hi = 0;

  explicit LatticeWindow(int half_width) : lo(-half_width), hi(half_width) {
    if (half_width < 1) throw config_error("LatticeWindow: half_width must be >= 1");
  }
  static LatticeWindow segment(int lo_site, int hi_site) {
    if (hi_site <= lo_site) throw config_error("LatticeWindow: segment needs hi > lo");
    LatticeWindow w(1);
    w.lo = lo_site;
    w.hi = hi_site;
    return w;
  }

  bool symmetric() const { return lo == -hi; }
  int half_width() const {
    if (!symmetric()) throw invariant_violation("LatticeWindow: half_width of asymmetric segment");
    return hi;
  }
  int site_count() const { return hi - lo + 1; }
  int bond_count() const { return hi - lo; }
  bool contains_site(int x) const { return x >= lo && x <= hi; }
  // A bond is named by its left site x and joins (x, x+1).
  bool contains_bond(int x) const { return x >= lo && x < hi; }
  std::size_t site_index(int x) const { return static_cast<std::size_t>(x - lo); }
  int site_at(std::size_t index) const { return lo + static_cast<int>(index); }

  friend bool operator==(const LatticeWindow& a, const LatticeWindow& b) {
    return a.lo == b.lo && a.hi == b.hi;
  }
};

// Particle density, validated once at the boundary of the API.
struct Density {
  double value;
  explicit Density(double v) : value(v) {
    if (!(v >= 0.0 && v <= 1.0)) throw config_error("Density: rho must lie in [0, 1]");
  }
  operator double() const { return value; }
};

// 0/1 occupancy per site of a window, stored densely.
struct Configuration {
  LatticeWindow window;
  std::vector<std::uint8_t> occ;

  explicit Configuration(const LatticeWindow& w)
      : window(w), occ(static_cast<std::size_t>(w.site_count()), 0) {}

  std::uint8_t at(int x) const { return occ[window.site_index(x)]; }
  void set(int x, bool v) { occ[window.site_index(x)] = v ? 1 : 0; }
  std::size_t particle_count() const {
    std::size_t n = 0;
    for (auto b : occ) n += b;
    return n;
  }
  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.window == b.window && a.occ == b.occ;
  }
};

// ----- deterministic stream derivation ------------------------------------

// Master seed for a whole experiment; everything else is derived from it.
struct SeedSpec {
  std::uint64_t master = 0;
};

// Purpose tags keep unrelated uses of randomness on disjoint streams.  Values
// are part of the reproducibility contract: do not renumber.
enum class StreamPurpose : std::uint64_t {
  bond_clock = 1,         // ring times of one bond within a replicate
  initial_config = 2,     // per-site occupancy draws
  init_attempt = 3,       // resampling attempts of the initial configuration
  frame_bond_clock = 4,   // tagged-frame exchange clocks
  frame_shift_clock = 5,  // tagged-frame shift candidate clocks
  frame_fill = 6,         // fresh occupancy entering the frame edge
  frame_config = 7,       // tagged-frame initial configuration
  replicate = 8,          // per-replicate sub-master
  aux_run = 9,            // auxiliary ensembles (verification sub-runs)
  bootstrap = 10,         // resampling in statistical error estimation
  synthetic = 11,         // synthetic self-test data
  mc_check = 12,          // Monte Carlo cross-checks against exact references
};

// SplitMix64 output mixing function (public-domain construction).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fold one word of context into a key (hash-combine followed by full mixing).
inline std::uint64_t fold_key(std::uint64_t key, std::uint64_t data) {
  key ^= data + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2);
  return mix64(key + 0x9e3779b97f4a7c15ULL);
}

// Map signed indices to unsigned so that the same lattice coordinate always
// derives the same stream no matter which window contains it.
inline std::uint64_t zigzag(std::int64_t n) {
  return (static_cast<std::uint64_t>(n) << 1) ^ static_cast<std::uint64_t>(n >> 63);
}

inline std::uint64_t derive_key(std::uint64_t parent, StreamPurpose purpose, std::int64_t index) {
  return fold_key(fold_key(parent, static_cast<std::uint64_t>(purpose)), zigzag(index));
}

// xoshiro256++ generator (public-domain construction), state seeded from a
// derived key via SplitMix64.  Sequential draws from one stream plus
// stateless key derivation across streams gives splittable randomness.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) {
    std::uint64_t x = key;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      w = mix64(x);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on the open interval (0, 1); safe as a log argument.
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Exponential with the given rate; strictly positive.
  double exponential(double rate) { return -std::log1p(-uniform_open01()) / rate; }

  // Standard normal via Box-Muller; draws two uniforms per pair.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// ----- sampling operations -------------------------------------------------

// Product-Bernoulli(rho) configuration.  Each site draws from its own derived
// stream, so windows of different size sharing a key agree on shared sites.
Configuration sample_config(const LatticeWindow& window, Density rho, std::uint64_t config_key);

// Swap the contents of sites (bond, bond+1).
void exchange(Configuration& config, int bond);

// Geometric on {1, 2, ...} with success probability rho: P(k) = rho(1-rho)^(k-1).
int sample_geometric(Density rho, RngStream& stream);

}  // namespace core
}  // namespace sseplab
