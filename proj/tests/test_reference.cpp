#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "morse/reference.hpp"
#include "oracles.hpp"

using morse::PiecewiseConstantDensity;

TEST_CASE("self-similar profile: frozen centre value, support, mass") {
  // rho(0, 1) = 6^{1/3} / 4.
  CHECK(morse::barenblatt(0.0, 1.0) ==
        doctest::Approx(std::cbrt(6.0) / 4.0).epsilon(1e-14));
  CHECK_THROWS_AS(morse::barenblatt(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(morse::barenblatt(0.0, -1.0), std::invalid_argument);

  for (double t : {0.5, 1.0, 3.0}) {
    const double r = morse::barenblatt_support_radius(t);
    CHECK(r > 0.0);
    CHECK(morse::barenblatt(r * 0.999, t) > 0.0);
    CHECK(morse::barenblatt(r * 1.001, t) == 0.0);
    CHECK(morse::barenblatt(-r * 1.001, t) == 0.0);
    CHECK(morse::barenblatt(r, t) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(morse::barenblatt(0.4 * r, t) ==
          doctest::Approx(morse::barenblatt(-0.4 * r, t)).epsilon(1e-15));
    const double mass = oracles::gk_integrate(
        [&](double x) { return morse::barenblatt(x, t); }, -r, r);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  }
  // The support spreads like t^{1/3}.
  CHECK(morse::barenblatt_support_radius(8.0) ==
        doctest::Approx(2.0 * morse::barenblatt_support_radius(1.0)).epsilon(1e-13));
}

TEST_CASE("profile solves the quadratic diffusion equation in the interior") {
  for (double t : {0.7, 1.5}) {
    const double r = morse::barenblatt_support_radius(t);
    for (double frac : {-0.7, -0.2, 0.0, 0.35, 0.75}) {
      const double x = frac * r;
      const double lhs = oracles::fd_derivative(
          [&](double tt) { return morse::barenblatt(x, tt); }, t, 1e-4);
      const double rhs = 0.5 * oracles::fd_second(
          [&](double xx) {
            const double v = morse::barenblatt(xx, t);
            return v * v;
          },
          x, 1e-4);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
    }
  }
}

TEST_CASE("cell-averaged profile conserves mass and converges in L2") {
  const double t = 1.0;
  const PiecewiseConstantDensity coarse = morse::barenblatt_cells(t, 64);
  const PiecewiseConstantDensity fine = morse::barenblatt_cells(t, 1024);
  CHECK(coarse.mass() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(fine.mass() == doctest::Approx(1.0).epsilon(1e-13));
  const double ec = morse::l2_distance_to_barenblatt(coarse, t);
  const double ef = morse::l2_distance_to_barenblatt(fine, t);
  CHECK(ec < 0.05);
  CHECK(ef < ec / 4.0);
  // Cell averages sit inside the profile's range.
  const double peak = morse::barenblatt(0.0, t);
  for (double v : coarse.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= peak * (1.0 + 1e-12));
  }
  CHECK_THROWS_AS(morse::barenblatt_cells(0.0, 64), std::invalid_argument);
  CHECK_THROWS_AS(morse::barenblatt_cells(1.0, 0), std::invalid_argument);
}

TEST_CASE("L2 distance: frozen overlap example and quadrature cross-check") {
  const PiecewiseConstantDensity a({0.0, 1.0}, {1.0});
  const PiecewiseConstantDensity b({0.5, 1.5}, {1.0});
  CHECK(morse::l2_distance(a, b) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(morse::l2_distance(a, a) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(morse::l2_distance(a, b) == doctest::Approx(morse::l2_distance(b, a)).epsilon(1e-14));

  oracles::TestRng rng(555);
  for (int rep = 0; rep < 6; ++rep) {
    const auto random_density = [&]() {
      std::vector<double> bp{rng.uni(-2.0, 0.0)};
      const std::size_t cells = 1 + rng.index(5);
      for (std::size_t c = 0; c < cells; ++c) bp.push_back(bp.back() + rng.uni(0.1, 1.0));
      std::vector<double> v;
      for (std::size_t c = 0; c < cells; ++c) v.push_back(rng.uni(0.0, 2.0));
      return PiecewiseConstantDensity(std::move(bp), std::move(v));
    };
    const PiecewiseConstantDensity da = random_density();
    const PiecewiseConstantDensity db = random_density();
    std::vector<double> kinks(da.breakpoints());
    for (double x : db.breakpoints()) kinks.push_back(x);
    const double lo = std::min(da.breakpoints().front(), db.breakpoints().front());
    const double hi = std::max(da.breakpoints().back(), db.breakpoints().back());
    const double want = std::sqrt(oracles::integrate_with_kinks(
        [&](double x) {
          const double d = da(x) - db(x);
          return d * d;
        },
        lo, hi, kinks));
    CHECK(morse::l2_distance(da, db) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("L2 distance to the profile matches quadrature") {
  const double t = 1.3;
  const double r = morse::barenblatt_support_radius(t);
  const PiecewiseConstantDensity d({-1.5, -0.2, 0.4, 1.1}, {0.2, 0.6, 0.25});
  std::vector<double> kinks(d.breakpoints());
  kinks.push_back(-r);
  kinks.push_back(r);
  const double lo = std::min(-r, d.breakpoints().front());
  const double hi = std::max(r, d.breakpoints().back());
  const double want = std::sqrt(oracles::integrate_with_kinks(
      [&](double x) {
        const double diff = d(x) - morse::barenblatt(x, t);
        return diff * diff;
      },
      lo, hi, kinks));
  CHECK(morse::l2_distance_to_barenblatt(d, t) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("finite-difference diffusion solver: conservation and self-similar decay") {
  const double t0 = 1.0, dt = 0.5;
  const PiecewiseConstantDensity rho0 = morse::barenblatt_cells(t0, 2048);
  const double r1 = morse::barenblatt_support_radius(t0 + dt);
  const PiecewiseConstantDensity sol =
      morse::fd_pme_solve(rho0, dt, -1.05 * r1, 1.05 * r1, 1200);
  CHECK(sol.mass() == doctest::Approx(1.0).epsilon(1e-10));
  // The evolved state tracks the aged profile, far closer than it stays to
  // the initial one.
  const double err_aged = morse::l2_distance_to_barenblatt(sol, t0 + dt);
  const double moved = morse::l2_distance(sol, rho0);
  CHECK(err_aged < 5e-3);
  CHECK(moved > 10.0 * err_aged);
  double peak0 = 0.0, peak1 = 0.0;
  for (double v : rho0.values()) peak0 = std::max(peak0, v);
  for (double v : sol.values()) {
    CHECK(v >= 0.0);
    peak1 = std::max(peak1, v);
  }
  // Maximum principle: the peak only decays.
  CHECK(peak1 <= peak0 * (1.0 + 1e-12));
}

TEST_CASE("finite-difference solver edge cases") {
  const PiecewiseConstantDensity rho0 = morse::barenblatt_cells(1.0, 256);
  // Zero elapsed time returns the grid projection of the input.
  const PiecewiseConstantDensity proj =
      morse::fd_pme_solve(rho0, 0.0, -2.0, 2.0, 800);
  CHECK(proj.mass() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(morse::l2_distance(proj, rho0) < 0.02);
  // Grid must cover the support and resolve it.
  CHECK_THROWS_AS(morse::fd_pme_solve(rho0, 0.1, -0.2, 0.2, 100), std::invalid_argument);
  CHECK_THROWS_AS(morse::fd_pme_solve(rho0, 0.1, -2.0, 2.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(morse::fd_pme_solve(rho0, -0.1, -2.0, 2.0, 100), std::invalid_argument);
}
