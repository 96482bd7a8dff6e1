#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda::test {

inline StateField normal_field(const GridSpec& spec, Rng& rng, double scale = 1.0) {
  StateField f(spec);
  for (auto& v : f.values()) v = scale * rng.normal();
  return f;
}

inline double max_abs_diff(const StateField& a, const StateField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_equal(const StateField& a, const StateField& b) {
  return a.spec() == b.spec() && a.vector() == b.vector();
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov distance between a sample and N(mean, var).
inline double ks_normal(std::vector<double> xs, double mean, double var) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf((xs[i] - mean) / std::sqrt(var));
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double var_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace sda::test
