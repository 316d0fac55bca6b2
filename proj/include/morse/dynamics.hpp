#ifndef MORSE_DYNAMICS_HPP
#define MORSE_DYNAMICS_HPP

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace morse {

// N+1 ordered particles x_0 <= ... <= x_N at a given time, with the kernel
// range epsilon they evolve under.  N = positions.size() - 1 >= 1.
struct ParticleState {
    std::vector<double> positions;
    double time = 0.0;
    double epsilon = 1.0;

    std::size_t n() const { return positions.size() - 1; }
    // Throws unless positions are finite nondecreasing (>= 2 of them),
    // epsilon > 0 and time >= 0.
    void validate() const;
    bool strictly_increasing() const;
    double min_gap() const;
};

struct Tolerances {
    double rel = 1e-8;
    double abs = -1.0; // < 0 means the default 1e-10 * epsilon
    double gap_slack = 0.1;
    double dt_min = 1e-14;

    double effective_abs(double epsilon) const {
        return abs < 0.0 ? 1e-10 * epsilon : abs;
    }
};

struct StepRecord {
    double t;       // time at the start of the attempted step
    double dt;
    bool accepted;
    double error;   // scaled embedded error estimate (accept iff <= 1)
    double min_gap; // smallest inter-particle gap after the step (accepted only)
};

struct Trajectory {
    std::vector<double> times;          // snapshot times, strictly increasing
    std::vector<ParticleState> states;  // states[i].time == times[i]
    std::vector<StepRecord> steps;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;

    std::size_t n() const { return states.front().n(); }
    double epsilon() const { return states.front().epsilon; }

    // CSV with header "time,x0,...,xN", one row per snapshot.
    void write_csv(std::ostream& os) const;
    // JSON manifest: N, epsilon, tolerances, seed, step counts.
    void write_manifest(std::ostream& os, const Tolerances& tol, std::uint64_t seed) const;
};

// Raised when the adaptive integrator cannot make progress; carries the last
// consistent state for post-mortem inspection.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, ParticleState last);
    const ParticleState& last_state() const { return last_; }

private:
    ParticleState last_;
};

// Particle velocities as the difference quotient
//   v_i = (1/N) sum_k [W(x_{k+1}-x_i) - W(x_k-x_i)] / (x_{k+1}-x_k),
// evaluated in O(N) by regrouping per source point and running exponential
// prefix/suffix recursions over pointwise kernel values.
std::vector<double> rhs_difference_quotient(const ParticleState& s);

// Particle velocities as v_i = -(W' * rho)(x_i) with rho the piecewise
// reconstruction; evaluated through the cell-integral convolution scan.
// Agrees with rhs_difference_quotient identically in exact arithmetic.
std::vector<double> rhs_convolution(const ParticleState& s);

// Splits every cluster of coincident particles symmetrically about its
// position, with spacing min(eta, half the gap to the nearest distinct
// neighbour) / (cluster size - 1).  Strictly increasing output; no particle
// moves by more than eta.  Strict inputs are returned unchanged.
ParticleState detach_overlaps(const ParticleState& s, double eta);

// Default detachment magnitude: min(2 eps/N, smallest positive gap) * 2^-20
// (2 eps/N alone when every particle coincides).
double default_detach_eta(const ParticleState& s);

// d0 * e^{-t/(2 eps^3)} + (2 eps / n) * (1 - e^{-t/(2 eps^3)}): the minimum
// inter-particle gap guaranteed at elapsed time t from initial gap d0.
double gap_lower_bound(double t, double d0, double eps, int n);

// Advances s to t_end with an embedded adaptive Runge-Kutta 4(5) pair
// (Dormand-Prince).  A step is rejected (and the step size reduced) when the
// embedded error exceeds tolerance, when any stage loses strict ordering, or
// when an inter-particle gap undercuts (1 - tol.gap_slack) times
// gap_lower_bound measured from the start of the run.  Overlapping initial
// positions are detached once with default_detach_eta.  The returned
// trajectory holds the (post-detachment) initial state, one state per
// requested snapshot time, and the state at t_end.
Trajectory integrate(const ParticleState& s, double t_end, const Tolerances& tol,
                     const std::vector<double>& snapshots);

} // namespace morse

#endif
