#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "morse/dynamics.hpp"
#include "oracles.hpp"

using morse::ParticleState;
using morse::Tolerances;
using morse::Trajectory;

namespace {

ParticleState make_state(std::vector<double> x, double eps, double t = 0.0) {
  ParticleState s;
  s.positions = std::move(x);
  s.epsilon = eps;
  s.time = t;
  return s;
}

// Independent O(N^2) evaluation of the velocity rule, straight from its
// defining sum, accumulated in extended precision.
std::vector<double> direct_rhs(const ParticleState& s) {
  const auto& x = s.positions;
  const std::size_t np = x.size();
  const double n = static_cast<double>(np - 1);
  const double eps = s.epsilon;
  const auto w = [&](double d) { return std::exp(-std::fabs(d) / eps) / (2.0 * eps); };
  std::vector<double> out(np);
  for (std::size_t i = 0; i < np; ++i) {
    long double acc = 0.0L;
    for (std::size_t k = 0; k + 1 < np; ++k) {
      acc += static_cast<long double>((w(x[k + 1] - x[i]) - w(x[k] - x[i])) /
                                      (x[k + 1] - x[k]));
    }
    out[i] = static_cast<double>(acc / n);
  }
  return out;
}

ParticleState random_state(oracles::TestRng& rng, std::size_t n, double eps) {
  std::vector<double> x;
  double cur = rng.uni(-2.0, 0.0);
  for (std::size_t i = 0; i <= n; ++i) {
    x.push_back(cur);
    cur += rng.uni(0.001, 0.4);
  }
  return make_state(std::move(x), eps);
}

}  // namespace

TEST_CASE("particle state validation and gap helpers") {
  ParticleState s = make_state({0.0, 0.5, 0.5, 2.0}, 0.3);
  CHECK(s.n() == 3);
  CHECK_NOTHROW(s.validate());
  CHECK_FALSE(s.strictly_increasing());
  CHECK(s.min_gap() == 0.0);
  s.positions = {0.0, 0.25, 1.0};
  CHECK(s.strictly_increasing());
  CHECK(s.min_gap() == 0.25);

  CHECK_THROWS_AS(make_state({0.0}, 0.3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_state({1.0, 0.0}, 0.3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_state({0.0, 1.0}, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_state({0.0, 1.0}, 0.3, -1.0).validate(), std::invalid_argument);
  const double nan = std::nan("");
  CHECK_THROWS_AS(make_state({0.0, nan}, 0.3).validate(), std::invalid_argument);
}

TEST_CASE("velocity of a single pair matches the frozen closed form") {
  // Two particles one unit apart, eps = 1: the outer pair repels at
  // (1 - e^{-1}) / 2 on each side.
  const ParticleState s = make_state({-0.5, 0.5}, 1.0);
  const double v = (1.0 - std::exp(-1.0)) / 2.0;
  for (auto* rhs : {&morse::rhs_difference_quotient, &morse::rhs_convolution}) {
    const std::vector<double> got = (*rhs)(s);
    REQUIRE(got.size() == 2);
    CHECK(got[0] == doctest::Approx(-v).epsilon(1e-14));
    CHECK(got[1] == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("velocity routes agree with each other and with the direct sum") {
  oracles::TestRng rng(5150);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.index(60);
    const double eps = rng.uni(0.1, 1.5);
    const ParticleState s = random_state(rng, n, eps);
    const auto a = morse::rhs_difference_quotient(s);
    const auto b = morse::rhs_convolution(s);
    const auto c = direct_rhs(s);
    double scale = 0.0;
    for (double v : c) scale = std::max(scale, std::fabs(v));
    scale = std::max(scale, 1.0 / (2.0 * eps));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::fabs(a[i] - b[i]) <= 1e-12 * scale);
      CHECK(std::fabs(a[i] - c[i]) <= 1e-10 * scale);
    }
  }
}

TEST_CASE("velocities of a mirror-symmetric configuration are antisymmetric") {
  const ParticleState s = make_state({-1.3, -0.4, -0.1, 0.1, 0.4, 1.3}, 0.35);
  const auto v = morse::rhs_convolution(s);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v[i] == doctest::Approx(-v[v.size() - 1 - i]).epsilon(1e-12));
  }
  // The outermost particles move outward (pure repulsion).
  CHECK(v.front() < 0.0);
  CHECK(v.back() > 0.0);
}

TEST_CASE("velocity rejects degenerate states") {
  CHECK_THROWS_AS(morse::rhs_difference_quotient(make_state({0.0, 0.0, 1.0}, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS(morse::rhs_convolution(make_state({0.0, 0.0, 1.0}, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("detach_overlaps splits clusters symmetrically") {
  const double eta = 1e-9;
  const auto got = morse::detach_overlaps(make_state({0.0, 0.0, 0.0, 1.0}, 0.5), eta);
  REQUIRE(got.positions.size() == 4);
  CHECK(got.positions[0] == doctest::Approx(-5e-10).epsilon(1e-12));
  CHECK(got.positions[1] == 0.0);
  CHECK(got.positions[2] == doctest::Approx(5e-10).epsilon(1e-12));
  CHECK(got.positions[3] == 1.0);
  CHECK(got.strictly_increasing());

  const auto all = morse::detach_overlaps(make_state({2.0, 2.0, 2.0}, 0.5), eta);
  CHECK(all.positions[0] == doctest::Approx(2.0 - eta / 2.0).epsilon(1e-15));
  CHECK(all.positions[1] == 2.0);
  CHECK(all.positions[2] == doctest::Approx(2.0 + eta / 2.0).epsilon(1e-15));

  // Spreading is capped by half the distance to the nearest distinct
  // neighbour, so a huge eta cannot cause a crossing.
  const auto capped = morse::detach_overlaps(make_state({0.0, 0.0, 1e-10}, 0.5), 1.0);
  CHECK(capped.strictly_increasing());
  CHECK(capped.positions[2] == 1e-10);
  CHECK(capped.positions[1] - capped.positions[0] <= 5e-11 * 1.0000001);

  // A strictly increasing state passes through untouched.
  const ParticleState strict = make_state({0.0, 0.5, 1.0}, 0.5);
  const auto same = morse::detach_overlaps(strict, eta);
  CHECK(same.positions == strict.positions);
}

TEST_CASE("detach_overlaps never moves a particle by more than eta") {
  oracles::TestRng rng(8181);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> x;
    double cur = 0.0;
    const std::size_t np = 3 + rng.index(20);
    for (std::size_t i = 0; i < np; ++i) {
      if (rng.uni() < 0.5) cur += rng.uni(0.0, 0.3);
      x.push_back(cur);
    }
    const double eta = rng.uni(1e-12, 1e-3);
    const ParticleState in = make_state(x, 0.4);
    const auto out = morse::detach_overlaps(in, eta);
    REQUIRE(out.positions.size() == x.size());
    CHECK(out.strictly_increasing());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::fabs(out.positions[i] - x[i]) <= eta * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("default detachment magnitude") {
  CHECK(morse::default_detach_eta(make_state({0.0, 0.0, 1.0}, 1.0)) ==
        doctest::Approx(std::ldexp(1.0, -20)).epsilon(1e-15));
  // Fully coincident states fall back to 2 eps / N alone.
  CHECK(morse::default_detach_eta(make_state({5.0, 5.0, 5.0}, 1.0)) ==
        doctest::Approx(std::ldexp(1.0, -20)).epsilon(1e-15));
  // A tiny positive gap caps the scale.
  CHECK(morse::default_detach_eta(make_state({0.0, 1e-6, 1.0, 1.0}, 1.0)) ==
        doctest::Approx(1e-6 * std::ldexp(1.0, -20)).epsilon(1e-12));
}

TEST_CASE("guaranteed gap floor: endpoints, monotonicity, frozen value") {
  const double eps = 0.3;
  const int n = 25;
  const double saturation = 2.0 * eps / n;
  CHECK(morse::gap_lower_bound(0.0, 1e-4, eps, n) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(morse::gap_lower_bound(1e9, 1e-4, eps, n) ==
        doctest::Approx(saturation).epsilon(1e-9));
  // Half-life form: starting from zero gap, at t = 2 eps^3 ln 2 the floor is
  // exactly half the saturation value, i.e. eps / n.
  const double t_half = 2.0 * eps * eps * eps * std::log(2.0);
  CHECK(morse::gap_lower_bound(t_half, 0.0, eps, n) ==
        doctest::Approx(eps / n).epsilon(1e-13));
  // Monotone towards saturation from either side.
  double prev_lo = 0.0, prev_hi = 1.0;
  for (double t : {0.001, 0.01, 0.1, 1.0}) {
    const double lo = morse::gap_lower_bound(t, 0.0, eps, n);
    const double hi = morse::gap_lower_bound(t, 1.0, eps, n);
    CHECK(lo > prev_lo);
    CHECK(hi < prev_hi);
    CHECK(lo < saturation);
    CHECK(hi > saturation);
    prev_lo = lo;
    prev_hi = hi;
  }
}

TEST_CASE("integration hits snapshot times exactly and keeps ordering") {
  oracles::TestRng rng(2024);
  const ParticleState s0 = random_state(rng, 16, 0.3);
  const std::vector<double> snaps{0.05, 0.1, 0.22};
  const Trajectory traj = morse::integrate(s0, 0.3, Tolerances{}, snaps);
  REQUIRE(traj.times.size() == 5);
  CHECK(traj.times[0] == s0.time);
  CHECK(traj.times[1] == 0.05);
  CHECK(traj.times[2] == 0.1);
  CHECK(traj.times[3] == 0.22);
  CHECK(traj.times[4] == 0.3);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    CHECK(traj.states[i].time == traj.times[i]);
    CHECK(traj.states[i].strictly_increasing());
  }
  CHECK(traj.accepted_steps > 0);
  std::size_t acc = 0, rej = 0;
  for (const auto& st : traj.steps) (st.accepted ? acc : rej)++;
  CHECK(acc == traj.accepted_steps);
  CHECK(rej == traj.rejected_steps);
  // Accepted gap records respect the guaranteed floor with the default slack.
  const double d0 = s0.min_gap();
  for (const auto& st : traj.steps) {
    if (!st.accepted) continue;
    const double floor_now =
        (1.0 - Tolerances{}.gap_slack) *
        morse::gap_lower_bound(st.t + st.dt - s0.time, d0, s0.epsilon, static_cast<int>(s0.n()));
    CHECK(st.min_gap >= floor_now * (1.0 - 1e-12));
  }
}

TEST_CASE("adaptive result matches a fine fixed-step reference integration") {
  oracles::TestRng rng(1234);
  const ParticleState s0 = random_state(rng, 8, 0.4);
  Tolerances tol;
  tol.rel = 1e-10;
  const double t_end = 0.1;
  const Trajectory traj = morse::integrate(s0, t_end, tol, {});
  // Classic RK4 with a tiny fixed step on the independent direct-sum rhs.
  std::vector<double> y = s0.positions;
  ParticleState cur = s0;
  const int steps = 5000;
  const double dt = t_end / steps;
  for (int s = 0; s < steps; ++s) {
    const auto eval = [&](const std::vector<double>& pos) {
      cur.positions = pos;
      return direct_rhs(cur);
    };
    const auto k1 = eval(y);
    std::vector<double> tmp(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
    const auto k2 = eval(tmp);
    for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
    const auto k3 = eval(tmp);
    for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + dt * k3[i];
    const auto k4 = eval(tmp);
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  const auto& got = traj.states.back().positions;
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(got[i] == doctest::Approx(y[i]).epsilon(5e-8));
  }
}

TEST_CASE("dynamics are translation equivariant") {
  // Positions on a dyadic grid so the shifted copies are exact.
  std::vector<double> base{0.0};
  for (int i = 0; i < 12; ++i) base.push_back(base.back() + (1 + i % 3) * 0.03125);
  const double c = 10.0;
  std::vector<double> shifted = base;
  for (double& x : shifted) x += c;
  const Trajectory a = morse::integrate(make_state(base, 0.25), 0.2, Tolerances{}, {0.1});
  const Trajectory b = morse::integrate(make_state(shifted, 0.25), 0.2, Tolerances{}, {0.1});
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t r = 0; r < a.states.size(); ++r) {
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::fabs(b.states[r].positions[i] - a.states[r].positions[i] - c) <= 1e-9);
    }
  }
}

TEST_CASE("coincident initial particles are detached and then spread") {
  const ParticleState s0 = make_state({-1.0, -1.0, -1.0, 1.0, 1.0}, 0.5);
  const Trajectory traj = morse::integrate(s0, 0.5, Tolerances{}, {});
  CHECK(traj.states.front().strictly_increasing());
  CHECK(traj.states.front().time == 0.0);
  CHECK(traj.states.back().strictly_increasing());
  // Repulsion pushes the cluster apart: the final minimum gap is far above
  // the detachment scale.
  CHECK(traj.states.back().min_gap() > 1e-3);
  // Mass-center symmetry of the symmetric pair of clusters is preserved.
  const auto& xf = traj.states.back().positions;
  CHECK(xf.front() < -1.0);
  CHECK(xf.back() > 1.0);
}

TEST_CASE("integration failure reports the last consistent state") {
  oracles::TestRng rng(99);
  const ParticleState s0 = random_state(rng, 6, 0.3);
  Tolerances tol;
  tol.rel = 1e-300;
  tol.abs = 1e-300;
  tol.dt_min = 1e-6;
  try {
    morse::integrate(s0, 1.0, tol, {});
    FAIL("expected IntegrationError");
  } catch (const morse::IntegrationError& e) {
    CHECK(e.last_state().positions.size() == s0.positions.size());
    CHECK(e.last_state().time >= s0.time);
    CHECK(e.last_state().time < 1.0);
    CHECK(std::string(e.what()).size() > 0);
  }
}

TEST_CASE("trajectory CSV and manifest formats") {
  oracles::TestRng rng(7);
  const ParticleState s0 = random_state(rng, 3, 0.5);
  const Trajectory traj = morse::integrate(s0, 0.05, Tolerances{}, {0.02});
  std::ostringstream csv;
  traj.write_csv(csv);
  std::istringstream in(csv.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "time,x0,x1,x2,x3");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == traj.times.size());

  std::ostringstream man;
  traj.write_manifest(man, Tolerances{}, 42);
  const auto j = nlohmann::json::parse(man.str());
  CHECK(j.at("N").get<std::size_t>() == 3);
  CHECK(j.at("epsilon").get<double>() == 0.5);
  CHECK(j.at("seed").get<std::uint64_t>() == 42);
  CHECK(j.at("snapshots").get<std::size_t>() == traj.times.size());
  CHECK(j.at("accepted_steps").get<std::size_t>() == traj.accepted_steps);
  CHECK(j.at("tolerances").at("rel").get<double>() == Tolerances{}.rel);
}
