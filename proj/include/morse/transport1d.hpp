#ifndef MORSE_TRANSPORT1D_HPP
#define MORSE_TRANSPORT1D_HPP

#include <cstddef>
#include <optional>
#include <vector>

namespace morse {

// Nonnegative piecewise-constant function: values[i] on [breakpoints[i], breakpoints[i+1]).
class PiecewiseConstantDensity {
public:
    PiecewiseConstantDensity(std::vector<double> breakpoints, std::vector<double> values);
    // Same, with the total mass pinned by the caller (used where the mass is
    // exact by construction, e.g. N cells of mass 1/N each).
    PiecewiseConstantDensity(std::vector<double> breakpoints, std::vector<double> values,
                             double known_mass);

    const std::vector<double>& breakpoints() const { return bp_; }
    const std::vector<double>& values() const { return v_; }
    std::size_t cells() const { return v_.size(); }
    double mass() const { return mass_; }

    // Pointwise value, right-continuous; 0 outside the breakpoint range.
    double operator()(double x) const;

private:
    std::vector<double> bp_;
    std::vector<double> v_;
    double mass_;
};

struct Atom {
    double position;
    double weight; // > 0
};

// A finite measure: optional absolutely continuous part plus finitely many atoms.
struct MeasureSpec {
    std::optional<PiecewiseConstantDensity> density;
    std::vector<Atom> atoms;

    double mass() const;
    // Throws unless |mass - 1| <= 1e-12 and atoms have positive weight.
    void validate_probability() const;
};

// Nondecreasing piecewise-linear function on [0,1] given by knots (z_i, x_i);
// z nondecreasing with z.front()=0, z.back()=1.  Duplicate z knots encode
// jumps (support gaps); segments with equal x encode atoms (flat parts).
// Evaluation returns the lowest branch at a duplicated z, which is the
// generalized inverse inf{x : F(x) >= z} of the underlying CDF.
class QuantileFn {
public:
    QuantileFn(std::vector<double> z, std::vector<double> x);

    const std::vector<double>& z() const { return z_; }
    const std::vector<double>& x() const { return x_; }
    double operator()(double z) const;

private:
    std::vector<double> z_;
    std::vector<double> x_;
};

// Exact quantile (generalized inverse CDF) of a probability measure.  The
// result is exactly piecewise linear for this input class, so the grid
// parameter is only validated; atoms become flat segments of width equal to
// their weight, zero-density gaps become jumps.
QuantileFn quantile_of(const MeasureSpec& m, std::size_t grid = 4096);

// 2-Wasserstein distance = L^2([0,1]) distance of quantile functions,
// integrated exactly segment by segment.
double wasserstein2(const QuantileFn& a, const QuantileFn& b);

// Atomization of an L^p density into N+1 strictly increasing positions:
// restrict to [-N, N], spread escaped mass uniformly as a constant
// (m_N + M_N)/(2N) over [-N, N], then place x_0 = -N and each subsequent
// position so that consecutive pairs bracket exactly mass 1/N.
std::vector<double> atomize_lp(const PiecewiseConstantDensity& rho, std::size_t n);

// Atomization of an arbitrary probability measure into N+1 nondecreasing
// positions x_i = X(i/N): restrict to [-N, N], spread escaped left/right mass
// uniformly over [-N, 0) / [0, N], take the exact quantile X of the result.
// Atoms of weight >= 1/N produce coincident particles.
std::vector<double> atomize_measure(const MeasureSpec& m, std::size_t n);

// Inverse of quantile_of for strictly increasing quantiles: recovers the
// piecewise-constant density with value (z-step)/(x-step) per segment; jumps
// become zero-value cells.  Flat segments (atoms) have no density and throw.
PiecewiseConstantDensity density_of_quantile(const QuantileFn& q);

} // namespace morse

#endif
