#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace sda {

/// Reproducible random source addressed by (seed, stream).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq, both of which
/// the standard specifies bit-exactly. Normal deviates use Box-Muller here
/// rather than std::normal_distribution, whose algorithm is
/// implementation-defined, so draws are portable across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent generator for a sub-task (member, tile, sample...).
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal();
  void fill_normal(std::span<double> out);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sda
