#ifndef MORSE_REFERENCE_HPP
#define MORSE_REFERENCE_HPP

#include <cstddef>

#include "morse/transport1d.hpp"

namespace morse {

// Unit-mass self-similar source solution of the quadratic porous medium
// equation  dt rho = 1/2 dxx(rho^2):
//   rho(x, t) = s^{-1/3} (C - xi^2 / 12)_+ ,  s = t/2,  xi = x s^{-1/3},
// with C = 3^{1/3}/4 fixed by the unit-mass normalization.
struct BarenblattParams {
    double mass = 1.0; // only unit mass is supported
    double t0 = 1.0;   // profile age used when seeding initial data
};

// Pointwise profile value; throws for t <= 0.
double barenblatt(double x, double t);

// Endpoint of the support: sqrt(12 C) * (t/2)^{1/3}.
double barenblatt_support_radius(double t);

// Exact cell averages of the profile over a uniform grid on
// [-radius, radius] (antiderivative differences, so mass is preserved).
PiecewiseConstantDensity barenblatt_cells(double t, std::size_t cells);

// Conservative explicit finite-difference solution of dt rho = 1/2 dxx(rho^2)
// on [xmin, xmax] with m cells and zero-flux boundaries, advanced by
// t_elapsed from rho0 (projected to cell averages).  Steps obey the CFL
// restriction dt <= 0.4 dx^2 / (2 max rho), re-evaluated every step; a
// positive dt argument additionally caps the step.  Mass is conserved to
// roundoff and nonnegativity/maximum principles hold under the CFL bound.
// Throws when the grid does not cover rho0's support with at least 4 cells.
PiecewiseConstantDensity fd_pme_solve(const PiecewiseConstantDensity& rho0,
                                      double t_elapsed, double xmin, double xmax,
                                      std::size_t m, double dt = 0.0);

// Exact L2 distance between two piecewise-constant densities (both extended
// by zero outside their breakpoint ranges).
double l2_distance(const PiecewiseConstantDensity& a, const PiecewiseConstantDensity& b);

// L2 distance between a piecewise-constant density and the Barenblatt
// profile at time t, exact up to roundoff (3-point Gauss per subinterval is
// exact for the piecewise-quartic integrand).
double l2_distance_to_barenblatt(const PiecewiseConstantDensity& a, double t);

} // namespace morse

#endif
