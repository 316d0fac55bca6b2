#ifndef MORSE_DIAGNOSTICS_HPP
#define MORSE_DIAGNOSTICS_HPP

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "morse/dynamics.hpp"
#include "morse/transport1d.hpp"

namespace morse {

// Piecewise-constant density carried by a strict particle state: cell
// [x_i, x_{i+1}) has value 1/(N (x_{i+1}-x_i)), so every cell holds mass
// exactly 1/N and the total is pinned to 1.
PiecewiseConstantDensity reconstruct_density(const ParticleState& s);

// L^p norm, p in [1, +inf]; pass std::numeric_limits<double>::infinity() for
// the sup norm.  Exact closed-form sum over cells.
double lp_norm(const PiecewiseConstantDensity& d, double p);

// Integral of rho log rho.  Every cell value must be positive.
double entropy(const PiecewiseConstantDensity& d);

// Half the double kernel integral (1/2) int rho (W * rho), evaluated with
// per-cell closed forms accumulated by the linear-time scan.
double interaction_energy(const ParticleState& s);

// int rho (W' * rho)^2, exact per cell.
double dissipation(const ParticleState& s);

// int rho (W'' * rho) = (1/eps^2) int rho (W * rho - rho); always <= 0 up to
// roundoff.  Computed in the cancelled form to avoid loss of significance.
double entropy_production(const ParticleState& s);

// int (W' * rho)^2 dx over the whole line, exponential tails included.
double velocity_l2_squared(const ParticleState& s);

// int rho |W' * rho| dx, with the sign-change root of the convolution
// resolved in closed form inside each cell.
double abs_flux(const ParticleState& s);

enum class Moment { AbsFirst, First, Second };
// Exact polynomial moment of a piecewise-constant density.
double moment(const PiecewiseConstantDensity& d, Moment k);

struct TestFunction {
    std::function<double(double)> phi;
    std::function<double(double)> dphi;
    double dphi_sup = 1.0; // sup norm of the derivative
};

struct WeakResidualResult {
    double residual; // time-averaged |d/dt int phi rho + int rho phi' (W'*rho)|
    double bound;    // sup|phi'| / (N eps^2)
};

// Measures how far the trajectory is from being an exact weak solution of
// the nonlocal equation, tested against phi over the window [t1, t2] of
// snapshots.  The time derivative uses centred differences over snapshot
// pairs; a Richardson comparison against the half-resolution estimate must
// come out below 10% of the bound, otherwise the snapshots are too sparse
// and an exception is thrown.
WeakResidualResult weak_residual(const Trajectory& traj, const TestFunction& tf,
                                 double t1, double t2);

struct ConePair {
    double n_value; // (1/(2M^2)) sum_{ij} N_eps(x_i - x_j), direct double sum
    double r_value; // (1/(4 eps)) [1 - (2/(eps M^2)) sum_i (2i - (M-1)) x_i]
};

// Evaluates both functionals with no ordering requirement.  They coincide
// exactly when x is sorted ascending and generically differ otherwise.
ConePair cone_functionals(const std::vector<double>& x, double eps);

// Same pair with the sorted precondition enforced (throws on unsorted input).
ConePair cone_identity_check(const std::vector<double>& x, double eps);

struct BoundCheck {
    std::string name;
    double time;
    double bound;
    double measured;
    double slack; // measured / bound (0 when the bound is 0 or infinite)
    bool pass;
};

struct BoundReport {
    std::vector<BoundCheck> checks;

    bool all_pass() const;
    std::size_t failures() const;
    // Flat CSV: name,time,bound,measured,slack,pass.
    void write_csv(std::ostream& os) const;
    // One JSON record per check (non-finite numbers serialize as null).
    void write_json(std::ostream& os) const;
};

// Evaluates every tracked inequality at every snapshot of the trajectory:
// unit mass, the per-gap lower bound (factor 0.9), L^p norm bounds and
// monotonicity for p in {2,3,inf}, the L-infinity smoothing bound, entropy
// monotonicity and the entropy identity against time-quadrature of
// entropy_production, the energy inequality with additive slack
// 4*linf(0)*t/(N eps^3), first-moment growth, and the time-integrated
// velocity-field bound by the entropy drop.  initial_lp passes the initial
// {L^2, L^3, L^inf} norms (may be +inf for measure initial data); the
// one-argument overload takes them from the reconstructed first snapshot.
BoundReport bound_report(const Trajectory& traj, const std::vector<double>& initial_lp);
BoundReport bound_report(const Trajectory& traj);

} // namespace morse

#endif
