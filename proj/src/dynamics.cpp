#include "morse/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"

#include "morse/diagnostics.hpp"
#include "morse/format.hpp"
#include "morse/kernel.hpp"

namespace morse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_strict(const ParticleState& s, const char* who) {
    s.validate();
    if (!s.strictly_increasing())
        throw std::invalid_argument(std::string(who) +
                                    ": positions must be strictly increasing (detach first)");
}

// Dormand-Prince 5(4) tableau; the last stage row doubles as the 5th-order
// weights (FSAL) and e_* are the embedded error weights.
struct Dopri {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

bool strict_and_finite(const std::vector<double>& x) {
    if (!std::isfinite(x.front())) return false;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        if (!(x[i + 1] > x[i]) || !std::isfinite(x[i + 1])) return false;
    return true;
}

} // namespace

void ParticleState::validate() const {
    if (positions.size() < 2)
        throw std::invalid_argument("ParticleState: need at least 2 particles");
    for (double x : positions)
        if (!std::isfinite(x)) throw std::invalid_argument("ParticleState: non-finite position");
    for (std::size_t i = 0; i + 1 < positions.size(); ++i)
        if (positions[i + 1] < positions[i])
            throw std::invalid_argument("ParticleState: positions must be nondecreasing");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("ParticleState: epsilon must be finite and > 0");
    if (!(time >= 0.0) || !std::isfinite(time))
        throw std::invalid_argument("ParticleState: time must be finite and >= 0");
}

bool ParticleState::strictly_increasing() const {
    for (std::size_t i = 0; i + 1 < positions.size(); ++i)
        if (!(positions[i] < positions[i + 1])) return false;
    return true;
}

double ParticleState::min_gap() const {
    double g = kInf;
    for (std::size_t i = 0; i + 1 < positions.size(); ++i)
        g = std::min(g, positions[i + 1] - positions[i]);
    return g;
}

IntegrationError::IntegrationError(const std::string& what, ParticleState last)
    : std::runtime_error(what), last_(std::move(last)) {}

std::vector<double> rhs_difference_quotient(const ParticleState& s) {
    require_strict(s, "rhs_difference_quotient");
    const std::vector<double>& x = s.positions;
    const std::size_t np = x.size();
    const double n = static_cast<double>(np - 1);
    const double eps = s.epsilon;

    // v_i = sum_j c_j W(x_j - x_i) with c_j = R_{j-1} - R_j, R_k = 1/(N d_k):
    // the per-cell kernel differences regrouped by source point.  Prefix and
    // suffix sums with decay-only exponential factors keep it O(N).  The
    // running sums hold intermediate values of size max_k R_k, far above the
    // O(1/eps) result when a gap is near-degenerate, so they accumulate in
    // extended precision; the R_k themselves stay in double so that both
    // velocity routes consume bit-identical cell values.
    std::vector<long double> c(np);
    double r_prev = 0.0;
    for (std::size_t j = 0; j < np; ++j) {
        const double r_next = (j + 1 < np) ? 1.0 / (n * (x[j + 1] - x[j])) : 0.0;
        c[j] = static_cast<long double>(r_prev) - static_cast<long double>(r_next);
        r_prev = r_next;
    }
    // The decay factor across a near-degenerate gap multiplies the huge
    // cancelling R-pair around it, so its own rounding is R-amplified: the
    // factors are evaluated in extended precision as well.
    const long double leps = static_cast<long double>(eps);
    std::vector<long double> acc(np);
    long double a = 0.0L;
    for (std::size_t j = 0; j < np; ++j) {
        if (j > 0) a *= std::exp(-static_cast<long double>(x[j] - x[j - 1]) / leps);
        a += c[j];
        acc[j] = a; // sum_{k<=j} c_k e^{-(x_j-x_k)/eps}
    }
    long double b = 0.0L;
    for (std::size_t j = np; j-- > 0;) {
        if (j + 1 < np) b *= std::exp(-static_cast<long double>(x[j + 1] - x[j]) / leps);
        b += c[j];
        acc[j] += b - c[j]; // add sum_{k>=j}, counting the diagonal once
    }
    std::vector<double> out(np);
    for (std::size_t j = 0; j < np; ++j)
        out[j] = static_cast<double>(acc[j] / (2.0L * static_cast<long double>(eps)));
    return out;
}

std::vector<double> rhs_convolution(const ParticleState& s) {
    require_strict(s, "rhs_convolution");
    const Kernel k(s.epsilon);
    const PiecewiseConstantDensity rho = reconstruct_density(s);
    std::vector<double> v =
        conv_density(k, rho.breakpoints(), rho.values(), s.positions, 1);
    for (double& vi : v) vi = -vi;
    return v;
}

ParticleState detach_overlaps(const ParticleState& s, double eta) {
    s.validate();
    if (!(eta > 0.0) || !std::isfinite(eta))
        throw std::invalid_argument("detach_overlaps: eta must be finite and > 0");
    const std::vector<double>& x = s.positions;
    ParticleState out = s;
    std::size_t i = 0;
    while (i < x.size()) {
        std::size_t j = i;
        while (j + 1 < x.size() && x[j + 1] == x[i]) ++j;
        const std::size_t k = j - i + 1;
        if (k >= 2) {
            double half_gap = kInf;
            if (i > 0) half_gap = 0.5 * (x[i] - x[i - 1]);
            if (j + 1 < x.size()) half_gap = std::min(half_gap, 0.5 * (x[j + 1] - x[j]));
            const double spacing =
                std::min(eta, half_gap) / static_cast<double>(k - 1);
            const double mid = 0.5 * static_cast<double>(k - 1);
            for (std::size_t m = 0; m < k; ++m)
                out.positions[i + m] = x[i] + (static_cast<double>(m) - mid) * spacing;
        }
        i = j + 1;
    }
    if (!out.strictly_increasing())
        throw std::invalid_argument("detach_overlaps: eta too small to separate clusters");
    return out;
}

double default_detach_eta(const ParticleState& s) {
    s.validate();
    double smallest = kInf;
    for (std::size_t i = 0; i + 1 < s.positions.size(); ++i) {
        const double d = s.positions[i + 1] - s.positions[i];
        if (d > 0.0) smallest = std::min(smallest, d);
    }
    const double base = 2.0 * s.epsilon / static_cast<double>(s.n());
    return std::min(base, smallest) * std::ldexp(1.0, -20);
}

double gap_lower_bound(double t, double d0, double eps, int n) {
    if (!(t >= 0.0) || !(d0 >= 0.0) || !(eps > 0.0) || n < 1)
        throw std::invalid_argument("gap_lower_bound: need t >= 0, d0 >= 0, eps > 0, n >= 1");
    const double decay = std::exp(-t / (2.0 * eps * eps * eps));
    return d0 * decay + (2.0 * eps / static_cast<double>(n)) * (1.0 - decay);
}

Trajectory integrate(const ParticleState& s_in, double t_end, const Tolerances& tol,
                     const std::vector<double>& snapshots) {
    ParticleState s = s_in;
    s.validate();
    if (!(std::isfinite(t_end)) || !(t_end > s.time))
        throw std::invalid_argument("integrate: t_end must be finite and exceed s.time");
    std::vector<double> snap = snapshots;
    std::sort(snap.begin(), snap.end());
    snap.erase(std::unique(snap.begin(), snap.end()), snap.end());
    for (double t : snap)
        if (!(t > s.time && t <= t_end))
            throw std::invalid_argument("integrate: snapshots must lie in (s.time, t_end]");
    if (snap.empty() || snap.back() < t_end) snap.push_back(t_end);

    if (!s.strictly_increasing()) s = detach_overlaps(s, default_detach_eta(s));

    const double t0 = s.time;
    const double eps = s.epsilon;
    const int n = static_cast<int>(s.n());
    const std::size_t np = s.positions.size();
    const double abs_tol = tol.effective_abs(eps);
    std::vector<double> d0(np - 1);
    for (std::size_t i = 0; i + 1 < np; ++i) d0[i] = s.positions[i + 1] - s.positions[i];

    Trajectory traj;
    traj.times.push_back(s.time);
    traj.states.push_back(s);

    double dt_prop = std::min(eps * eps * eps, 0.01 * (t_end - t0));
    std::vector<double> k1 = rhs_convolution(s);
    std::vector<double> k2, k3, k4, k5, k6, k7, y, ynew;
    std::size_t snap_idx = 0;

    auto stage = [&](std::vector<double>& out, double dt,
                     std::initializer_list<std::pair<const std::vector<double>*, double>> terms) {
        out = s.positions;
        for (std::size_t i = 0; i < np; ++i) {
            double acc = 0.0;
            for (const auto& [kv, w] : terms) acc += w * (*kv)[i];
            out[i] += dt * acc;
        }
    };

    while (s.time < t_end) {
        const double t_target = snap[snap_idx];
        bool hit = false;
        double dt = dt_prop;
        if (dt >= t_target - s.time) {
            dt = t_target - s.time;
            hit = true;
        }
        if (dt < tol.dt_min)
            throw IntegrationError("integrate: step size underflow at t=" +
                                       format_double(s.time) + " (dt=" + format_double(dt) + ")",
                                   s);

        // Stage cascade; any disordered stage vector aborts the attempt.
        bool ok = true;
        ParticleState tmp = s;
        auto eval = [&](const std::vector<double>& pos, std::vector<double>& k_out) {
            if (!strict_and_finite(pos)) return false;
            tmp.positions = pos;
            k_out = rhs_convolution(tmp);
            return true;
        };
        stage(y, dt, {{&k1, Dopri::a21}});
        ok = ok && eval(y, k2);
        if (ok) {
            stage(y, dt, {{&k1, Dopri::a31}, {&k2, Dopri::a32}});
            ok = eval(y, k3);
        }
        if (ok) {
            stage(y, dt, {{&k1, Dopri::a41}, {&k2, Dopri::a42}, {&k3, Dopri::a43}});
            ok = eval(y, k4);
        }
        if (ok) {
            stage(y, dt,
                  {{&k1, Dopri::a51}, {&k2, Dopri::a52}, {&k3, Dopri::a53}, {&k4, Dopri::a54}});
            ok = eval(y, k5);
        }
        if (ok) {
            stage(y, dt,
                  {{&k1, Dopri::a61},
                   {&k2, Dopri::a62},
                   {&k3, Dopri::a63},
                   {&k4, Dopri::a64},
                   {&k5, Dopri::a65}});
            ok = eval(y, k6);
        }
        if (ok) {
            stage(ynew, dt,
                  {{&k1, Dopri::b1},
                   {&k3, Dopri::b3},
                   {&k4, Dopri::b4},
                   {&k5, Dopri::b5},
                   {&k6, Dopri::b6}});
            ok = eval(ynew, k7);
        }
        if (!ok) {
            traj.steps.push_back({s.time, dt, false, kInf,
                                  std::numeric_limits<double>::quiet_NaN()});
            ++traj.rejected_steps;
            dt_prop = 0.5 * dt;
            continue;
        }

        // Embedded error, scaled by the configuration diameter so that step
        // control is translation-invariant.
        const double diam = s.positions.back() - s.positions.front();
        const double sc = abs_tol + tol.rel * diam;
        double err_sq = 0.0;
        for (std::size_t i = 0; i < np; ++i) {
            const double e = dt * (Dopri::e1 * k1[i] + Dopri::e3 * k3[i] + Dopri::e4 * k4[i] +
                                   Dopri::e5 * k5[i] + Dopri::e6 * k6[i] + Dopri::e7 * k7[i]);
            err_sq += (e / sc) * (e / sc);
        }
        const double err = std::sqrt(err_sq / static_cast<double>(np));

        // Gap safeguard against the guaranteed lower bound from the run start.
        const double t_new = hit ? t_target : s.time + dt;
        bool gaps_ok = true;
        double min_gap = kInf;
        for (std::size_t i = 0; i + 1 < np; ++i) {
            const double d = ynew[i + 1] - ynew[i];
            min_gap = std::min(min_gap, d);
            if (d < (1.0 - tol.gap_slack) * gap_lower_bound(t_new - t0, d0[i], eps, n)) {
                gaps_ok = false;
                break;
            }
        }

        if (err > 1.0 || !gaps_ok) {
            traj.steps.push_back({s.time, dt, false, err, min_gap});
            ++traj.rejected_steps;
            const double f = gaps_ok
                                 ? std::max(0.2, 0.9 * std::pow(err, -0.2))
                                 : 0.5;
            dt_prop = dt * std::min(f, 0.9);
            continue;
        }

        traj.steps.push_back({s.time, dt, true, err, min_gap});
        ++traj.accepted_steps;
        s.positions = ynew;
        s.time = t_new;
        k1 = k7; // first-same-as-last
        const double f = err > 1e-30 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
        dt_prop = dt * f;
        if (hit) {
            traj.times.push_back(s.time);
            traj.states.push_back(s);
            ++snap_idx;
        }
    }
    return traj;
}

void Trajectory::write_csv(std::ostream& os) const {
    os << "time";
    for (std::size_t i = 0; i < states.front().positions.size(); ++i) os << ",x" << i;
    os << "\n";
    for (std::size_t r = 0; r < states.size(); ++r) {
        os << format_double(times[r]);
        for (double x : states[r].positions) os << ',' << format_double(x);
        os << "\n";
    }
}

void Trajectory::write_manifest(std::ostream& os, const Tolerances& tol,
                                std::uint64_t seed) const {
    nlohmann::ordered_json j;
    j["N"] = n();
    j["epsilon"] = epsilon();
    j["tolerances"] = {{"rel", tol.rel},
                       {"abs", tol.effective_abs(epsilon())},
                       {"gap_slack", tol.gap_slack},
                       {"dt_min", tol.dt_min}};
    j["seed"] = seed;
    j["snapshots"] = times.size();
    j["accepted_steps"] = accepted_steps;
    j["rejected_steps"] = rejected_steps;
    os << j.dump(2) << "\n";
}

} // namespace morse
