#pragma once

// Shared independent reference implementations ("oracles") for the unit and
// acceptance tests: adaptive quadrature, Richardson finite differences, a
// stratified quantile-coupling metric, and a numeric CDF inverter.  These
// deliberately avoid the library's own closed forms so that agreement is
// evidence, not tautology.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "morse/transport1d.hpp"

namespace oracles {

// Deterministic uniforms built directly from mt19937_64 bits, so results do
// not depend on the standard library's distribution implementations.
struct TestRng {
  std::mt19937_64 g;
  explicit TestRng(std::uint64_t seed) : g(seed) {}
  double uni() { return std::ldexp(static_cast<double>(g() >> 11), -53); }
  double uni(double a, double b) { return a + (b - a) * uni(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(g() % n); }
};

inline double gk_integrate(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 12, 1e-13);
}

// Integral of f over [a, b] split at the given interior kink locations.
inline double integrate_with_kinks(const std::function<double(double)>& f, double a, double b,
                                   std::vector<double> kinks) {
  kinks.push_back(a);
  kinks.push_back(b);
  std::sort(kinks.begin(), kinks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < kinks.size(); ++i) {
    const double lo = std::max(a, kinks[i]), hi = std::min(b, kinks[i + 1]);
    if (hi > lo) total += gk_integrate(f, lo, hi);
  }
  return total;
}

// First derivative by central differences with one Richardson extrapolation.
inline double fd_derivative(const std::function<double(double)>& f, double x, double h) {
  const auto d = [&](double step) { return (f(x + step) - f(x - step)) / (2.0 * step); };
  return (4.0 * d(h / 2.0) - d(h)) / 3.0;
}

// Second derivative by central differences with one Richardson extrapolation.
inline double fd_second(const std::function<double(double)>& f, double x, double h) {
  const auto d = [&](double step) {
    return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
  };
  return (4.0 * d(h / 2.0) - d(h)) / 3.0;
}

// Quantile-coupling approximation of the 2-Wasserstein distance: stratified
// midpoint evaluation of the L2([0,1]) distance of quantile functions.
inline double d2_coupling(const morse::QuantileFn& qa, const morse::QuantileFn& qb,
                          std::size_t strata) {
  double acc = 0.0;
  for (std::size_t i = 0; i < strata; ++i) {
    const double z = (static_cast<double>(i) + 0.5) / static_cast<double>(strata);
    const double d = qa(z) - qb(z);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(strata));
}

// Numeric CDF of a measure (exact cell sums for the density part).
inline double cdf_of_measure(const morse::MeasureSpec& m, double x) {
  double acc = 0.0;
  if (m.density) {
    const auto& bp = m.density->breakpoints();
    const auto& v = m.density->values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (x <= bp[i]) break;
      acc += v[i] * (std::min(x, bp[i + 1]) - bp[i]);
    }
  }
  for (const auto& a : m.atoms)
    if (a.position <= x) acc += a.weight;
  return acc;
}

// Generalized inverse inf{x : F(x) >= z} by bisection on the numeric CDF.
inline double bisect_quantile(const morse::MeasureSpec& m, double z, double lo, double hi) {
  if (cdf_of_measure(m, lo) >= z) return lo;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf_of_measure(m, mid) >= z)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace oracles
