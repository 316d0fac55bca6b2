#include "morse/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "morse/format.hpp"
#include "morse/kernel.hpp"

namespace morse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Inside cell j the convolution has the two-exponential profile
//   (W * rho)(x)  = alpha_j A + beta_j B + v_j,
//   (W' * rho)(x) = (-alpha_j A + beta_j B) / eps,
// with A = e^{-(x-a_j)/eps}, B = e^{-(b_j-x)/eps}; alpha/beta come from the
// left/right prefix accumulators of the linear-time kernel scan.
struct CellScan {
    double eps;
    std::vector<double> a, b, h, v, alpha, beta;
    double left_tail;  // (W * rho) at the first breakpoint from the right side
    double right_tail; // (W * rho) at the last breakpoint from the left side
};

CellScan make_scan(const PiecewiseConstantDensity& rho, double eps) {
    const Kernel kern(eps);
    const std::vector<double>& bp = rho.breakpoints();
    const std::vector<double>& v = rho.values();
    const ConvScan cs = conv_scan(kern, bp, v, bp);
    const std::size_t m = v.size();
    CellScan s;
    s.eps = eps;
    s.a.resize(m);
    s.b.resize(m);
    s.h.resize(m);
    s.v = v;
    s.alpha.resize(m);
    s.beta.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        s.a[j] = bp[j];
        s.b[j] = bp[j + 1];
        s.h[j] = bp[j + 1] - bp[j];
        s.alpha[j] = cs.left[j] - 0.5 * v[j];
        s.beta[j] = cs.right[j + 1] - 0.5 * v[j];
    }
    s.left_tail = cs.right.front();
    s.right_tail = cs.left.back();
    return s;
}

double conv_value(const CellScan& s, std::size_t j, double x) {
    const double aexp = std::exp(-(x - s.a[j]) / s.eps);
    const double bexp = std::exp(-(s.b[j] - x) / s.eps);
    return (-s.alpha[j] * aexp + s.beta[j] * bexp) / s.eps; // (W' * rho)(x)
}

CellScan scan_of_state(const ParticleState& s) {
    return make_scan(reconstruct_density(s), s.epsilon);
}

struct Gauss5 {
    static constexpr double node[5] = {0.0, 0.5384693101056831, -0.5384693101056831,
                                       0.9061798459386640, -0.9061798459386640};
    static constexpr double weight[5] = {0.5688888888888889, 0.4786286704993665,
                                         0.4786286704993665, 0.2369268850561891,
                                         0.2369268850561891};
};

// Per-cell Gauss quadrature of fn over the density's support, cells split so
// each piece spans at most eps/2 (the integrands vary on the kernel scale).
template <typename F>
double cellwise_integral(const CellScan& s, F&& fn) {
    double total = 0.0;
    for (std::size_t j = 0; j < s.v.size(); ++j) {
        const std::size_t pieces =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(s.h[j] / (0.5 * s.eps))));
        const double step = s.h[j] / static_cast<double>(pieces);
        for (std::size_t p = 0; p < pieces; ++p) {
            const double lo = s.a[j] + step * static_cast<double>(p);
            const double mid = lo + 0.5 * step, half = 0.5 * step;
            double acc = 0.0;
            for (int g = 0; g < 5; ++g)
                acc += Gauss5::weight[g] * fn(j, mid + half * Gauss5::node[g]);
            total += acc * half;
        }
    }
    return total;
}

std::vector<double> cumulative_trapezoid(const std::vector<double>& t,
                                         const std::vector<double>& f) {
    std::vector<double> out(t.size(), 0.0);
    for (std::size_t k = 1; k < t.size(); ++k)
        out[k] = out[k - 1] + 0.5 * (f[k] + f[k - 1]) * (t[k] - t[k - 1]);
    return out;
}

} // namespace

PiecewiseConstantDensity reconstruct_density(const ParticleState& s) {
    s.validate();
    if (!s.strictly_increasing())
        throw std::invalid_argument("reconstruct_density: coincident particles (detach first)");
    const double n = static_cast<double>(s.n());
    std::vector<double> values(s.positions.size() - 1);
    for (std::size_t i = 0; i + 1 < s.positions.size(); ++i)
        values[i] = 1.0 / (n * (s.positions[i + 1] - s.positions[i]));
    return PiecewiseConstantDensity(s.positions, std::move(values), 1.0);
}

double lp_norm(const PiecewiseConstantDensity& d, double p) {
    if (std::isnan(p) || p < 1.0) throw std::invalid_argument("lp_norm: need p >= 1");
    const std::vector<double>& v = d.values();
    const std::vector<double>& bp = d.breakpoints();
    if (std::isinf(p)) return *std::max_element(v.begin(), v.end());
    if (p == 1.0) {
        double acc = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) acc += v[j] * (bp[j + 1] - bp[j]);
        return acc;
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j)
        acc += std::pow(v[j], p) * (bp[j + 1] - bp[j]);
    return std::pow(acc, 1.0 / p);
}

double entropy(const PiecewiseConstantDensity& d) {
    const std::vector<double>& v = d.values();
    const std::vector<double>& bp = d.breakpoints();
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] <= 0.0)
            throw std::invalid_argument("entropy: zero value on a positive-width cell");
        acc += v[j] * std::log(v[j]) * (bp[j + 1] - bp[j]);
    }
    return acc;
}

double interaction_energy(const ParticleState& s) {
    const CellScan sc = scan_of_state(s);
    double e2 = 0.0;
    for (std::size_t j = 0; j < sc.v.size(); ++j) {
        const double g = sc.eps * (1.0 - std::exp(-sc.h[j] / sc.eps));
        e2 += sc.v[j] * ((sc.alpha[j] + sc.beta[j]) * g + sc.v[j] * sc.h[j]);
    }
    return 0.5 * e2;
}

namespace {

// int over cell j of (W' * rho)^2, exact: the profile is c_a A + c_b B with
// c_a = -alpha/eps, c_b = beta/eps, and A^2, AB, B^2 integrate in closed form.
double cell_velocity_sq(const CellScan& s, std::size_t j) {
    const double e = s.eps, h = s.h[j];
    const double ca = -s.alpha[j] / e, cb = s.beta[j] / e;
    const double eh = std::exp(-h / e);
    const double iaa = 0.5 * e * (1.0 - eh * eh);
    const double iab = h * eh;
    return ca * ca * iaa + 2.0 * ca * cb * iab + cb * cb * iaa;
}

} // namespace

double dissipation(const ParticleState& s) {
    const CellScan sc = scan_of_state(s);
    double acc = 0.0;
    for (std::size_t j = 0; j < sc.v.size(); ++j) acc += sc.v[j] * cell_velocity_sq(sc, j);
    return acc;
}

double entropy_production(const ParticleState& s) {
    const CellScan sc = scan_of_state(s);
    double acc = 0.0;
    for (std::size_t j = 0; j < sc.v.size(); ++j) {
        const double g = sc.eps * (1.0 - std::exp(-sc.h[j] / sc.eps));
        acc += sc.v[j] * (sc.alpha[j] + sc.beta[j]) * g;
    }
    return acc / (sc.eps * sc.eps);
}

double velocity_l2_squared(const ParticleState& s) {
    const CellScan sc = scan_of_state(s);
    double acc = 0.0;
    for (std::size_t j = 0; j < sc.v.size(); ++j) acc += cell_velocity_sq(sc, j);
    // Outside the support (W' * rho)(x) = -L(x)/eps resp. R(x)/eps with pure
    // exponential decay from the boundary accumulators.
    acc += (sc.left_tail * sc.left_tail + sc.right_tail * sc.right_tail) / (2.0 * sc.eps);
    return acc;
}

double abs_flux(const ParticleState& s) {
    const CellScan sc = scan_of_state(s);
    const double e = sc.eps;
    double acc = 0.0;
    for (std::size_t j = 0; j < sc.v.size(); ++j) {
        const double al = sc.alpha[j], be = sc.beta[j], h = sc.h[j];
        const double eh = std::exp(-h / e);
        // Antiderivative of (W' * rho) on the cell: G = alpha A + beta B.
        const double g_a = al + be * eh;
        const double g_b = al * eh + be;
        double integral;
        double root = kInf;
        if (al != 0.0 && be != 0.0 && (al > 0.0) == (be > 0.0))
            root = 0.5 * (sc.a[j] + sc.b[j]) - 0.5 * e * std::log(be / al);
        if (root > sc.a[j] && root < sc.b[j]) {
            const double g_r = al * std::exp(-(root - sc.a[j]) / e) +
                               be * std::exp(-(sc.b[j] - root) / e);
            integral = std::abs(g_r - g_a) + std::abs(g_b - g_r);
        } else {
            integral = std::abs(g_b - g_a);
        }
        acc += sc.v[j] * integral;
    }
    return acc;
}

double moment(const PiecewiseConstantDensity& d, Moment k) {
    const std::vector<double>& v = d.values();
    const std::vector<double>& bp = d.breakpoints();
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double a = bp[j], b = bp[j + 1];
        double cell = 0.0;
        switch (k) {
            case Moment::First: cell = 0.5 * (b * b - a * a); break;
            case Moment::Second: cell = (b * b * b - a * a * a) / 3.0; break;
            case Moment::AbsFirst:
                if (a >= 0.0) cell = 0.5 * (b * b - a * a);
                else if (b <= 0.0) cell = 0.5 * (a * a - b * b);
                else cell = 0.5 * (a * a + b * b);
                break;
        }
        acc += v[j] * cell;
    }
    return acc;
}

WeakResidualResult weak_residual(const Trajectory& traj, const TestFunction& tf,
                                 double t1, double t2) {
    if (!(t1 < t2)) throw std::invalid_argument("weak_residual: need t1 < t2");
    if (!tf.phi || !tf.dphi || !(tf.dphi_sup > 0.0))
        throw std::invalid_argument("weak_residual: incomplete test function");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= t1 - 1e-12 && traj.times[i] <= t2 + 1e-12) idx.push_back(i);
    if (idx.size() < 5)
        throw std::invalid_argument("weak_residual: window must contain at least 5 snapshots");

    const double eps = traj.epsilon();
    const double bound =
        tf.dphi_sup / (static_cast<double>(traj.n()) * eps * eps);

    std::vector<double> tt(idx.size()), iv(idx.size()), sv(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const ParticleState& st = traj.states[idx[k]];
        const CellScan sc = scan_of_state(st);
        tt[k] = traj.times[idx[k]];
        iv[k] = cellwise_integral(
            sc, [&](std::size_t j, double x) { return sc.v[j] * tf.phi(x); });
        sv[k] = cellwise_integral(sc, [&](std::size_t j, double x) {
            return sc.v[j] * tf.dphi(x) * conv_value(sc, j, x);
        });
    }

    auto residual_at_stride = [&](std::size_t stride) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k + stride < tt.size(); k += stride) {
            const double dt = tt[k + stride] - tt[k];
            const double dq = (iv[k + stride] - iv[k]) / dt;
            const double sa = 0.5 * (sv[k] + sv[k + stride]);
            num += std::abs(dq + sa) * dt;
            den += dt;
        }
        return num / den;
    };
    const double r_full = residual_at_stride(1);
    const double r_half = residual_at_stride(2);
    if (std::abs(r_full - r_half) / 3.0 > 0.1 * bound)
        throw std::invalid_argument(
            "weak_residual: snapshots too sparse for the time derivative");
    return {r_full, bound};
}

ConePair cone_functionals(const std::vector<double>& x, double eps) {
    if (x.empty()) throw std::invalid_argument("cone_functionals: empty input");
    if (!(eps > 0.0) || !std::isfinite(eps))
        throw std::invalid_argument("cone_functionals: eps must be finite and > 0");
    for (double xi : x)
        if (!std::isfinite(xi)) throw std::invalid_argument("cone_functionals: non-finite entry");
    const std::size_t m = x.size();
    const double md = static_cast<double>(m);
    double pair_sum = 0.0; // sum over all (i,j) of 1 - |x_i - x_j| / eps
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) pair_sum += 1.0 - std::abs(x[i] - x[j]) / eps;
    double rank_sum = 0.0; // sum of (2i - (M-1)) x_i
    for (std::size_t i = 0; i < m; ++i)
        rank_sum += (2.0 * static_cast<double>(i) - (md - 1.0)) * x[i];
    ConePair out;
    out.n_value = pair_sum / (4.0 * eps * md * md);
    out.r_value = (1.0 - 2.0 * rank_sum / (eps * md * md)) / (4.0 * eps);
    return out;
}

ConePair cone_identity_check(const std::vector<double>& x, double eps) {
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        if (x[i + 1] < x[i])
            throw std::invalid_argument("cone_identity_check: input must be sorted ascending");
    return cone_functionals(x, eps);
}

bool BoundReport::all_pass() const {
    for (const BoundCheck& c : checks)
        if (!c.pass) return false;
    return true;
}

std::size_t BoundReport::failures() const {
    std::size_t n = 0;
    for (const BoundCheck& c : checks)
        if (!c.pass) ++n;
    return n;
}

void BoundReport::write_csv(std::ostream& os) const {
    os << "name,time,bound,measured,slack,pass\n";
    for (const BoundCheck& c : checks) {
        os << c.name << ',' << format_double(c.time) << ',' << format_double(c.bound) << ','
           << format_double(c.measured) << ',' << format_double(c.slack) << ','
           << (c.pass ? 1 : 0) << "\n";
    }
}

void BoundReport::write_json(std::ostream& os) const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const BoundCheck& c : checks) {
        nlohmann::ordered_json rec;
        rec["name"] = c.name;
        rec["time"] = c.time;
        rec["bound"] = c.bound;
        rec["measured"] = c.measured;
        rec["slack"] = c.slack;
        rec["pass"] = c.pass;
        arr.push_back(std::move(rec));
    }
    os << arr.dump(2) << "\n";
}

BoundReport bound_report(const Trajectory& traj, const std::vector<double>& initial_lp) {
    if (traj.states.size() < 2)
        throw std::invalid_argument("bound_report: need at least 2 snapshots");
    if (initial_lp.size() != 3)
        throw std::invalid_argument("bound_report: initial_lp must hold {L2, L3, Linf}");
    const std::size_t ns = traj.states.size();
    const double eps = traj.epsilon();
    const double n = static_cast<double>(traj.n());
    const double t0 = traj.times.front();
    const double eps3 = eps * eps * eps;

    std::vector<double> l1(ns), l2(ns), l3(ns), linf(ns), ent(ns), energy(ns), diss(ns),
        vel2(ns), aflux(ns), m1(ns), prod(ns);
    for (std::size_t k = 0; k < ns; ++k) {
        const ParticleState& st = traj.states[k];
        const PiecewiseConstantDensity rho = reconstruct_density(st);
        l1[k] = lp_norm(rho, 1.0);
        l2[k] = lp_norm(rho, 2.0);
        l3[k] = lp_norm(rho, 3.0);
        linf[k] = lp_norm(rho, kInf);
        ent[k] = entropy(rho);
        energy[k] = interaction_energy(st);
        diss[k] = dissipation(st);
        vel2[k] = velocity_l2_squared(st);
        aflux[k] = abs_flux(st);
        m1[k] = moment(rho, Moment::AbsFirst);
        prod[k] = entropy_production(st);
    }
    const std::vector<double> cprod = cumulative_trapezoid(traj.times, prod);
    const std::vector<double> cdiss = cumulative_trapezoid(traj.times, diss);
    const std::vector<double> cvel = cumulative_trapezoid(traj.times, vel2);
    const std::vector<double> cflux = cumulative_trapezoid(traj.times, aflux);

    const std::vector<double>& x0 = traj.states.front().positions;
    std::vector<double> d0(x0.size() - 1);
    for (std::size_t i = 0; i + 1 < x0.size(); ++i) d0[i] = x0[i + 1] - x0[i];

    BoundReport rep;
    auto add_le = [&](const std::string& name, double t, double bound, double measured) {
        const double slack =
            (std::isfinite(bound) && bound != 0.0) ? measured / bound : 0.0;
        rep.checks.push_back({name, t, bound, measured, slack, measured <= bound});
    };
    auto add_ge = [&](const std::string& name, double t, double bound, double measured) {
        const double slack =
            (std::isfinite(bound) && bound != 0.0) ? measured / bound : 0.0;
        rep.checks.push_back({name, t, bound, measured, slack, measured >= bound});
    };

    const double lp_pow[3] = {0.5, 2.0 / 3.0, 1.0}; // 1 - 1/p for p = 2, 3, inf
    double lp_cap[3];
    for (int i = 0; i < 3; ++i)
        lp_cap[i] = 1.05 * std::max(initial_lp[i], std::pow(2.0 * eps, -lp_pow[i]));
    const double kappa = 4.0 * initial_lp[2];

    for (std::size_t k = 0; k < ns; ++k) {
        const double t = traj.times[k];
        add_le("mass", t, 1e-12, std::abs(l1[k] - 1.0));

        double ratio = kInf;
        const std::vector<double>& xk = traj.states[k].positions;
        for (std::size_t i = 0; i + 1 < xk.size(); ++i) {
            const double lb = gap_lower_bound(t - t0, d0[i], eps, static_cast<int>(n));
            ratio = std::min(ratio, (xk[i + 1] - xk[i]) / lb);
        }
        add_ge("gap_bound", t, 0.9, ratio);

        add_le("lp_bound_p2", t, lp_cap[0], l2[k]);
        add_le("lp_bound_p3", t, lp_cap[1], l3[k]);
        add_le("lp_bound_pinf", t, lp_cap[2], linf[k]);

        if (k == 0) continue;
        add_le("smoothing_linf", t,
               1.05 / (2.0 * eps * (1.0 - std::exp(-(t - t0) / (2.0 * eps3)))), linf[k]);
        add_le("l2_monotone", t, l2[k - 1] + 1e-8, l2[k]);
        add_le("l3_monotone", t, l3[k - 1] + 1e-8, l3[k]);
        add_le("linf_monotone", t, linf[k - 1] + 1e-8, linf[k]);
        add_le("entropy_monotone", t, ent[k - 1] + 1e-8, ent[k]);
        add_le("entropy_identity", t, 1e-4, std::abs(ent[k] - ent[0] - cprod[k]));
        add_le("energy_inequality", t, energy[0] + kappa * (t - t0) / (n * eps3),
               energy[k] + cdiss[k]);
        add_le("first_moment", t, 1.05 * (m1[0] + cflux[k] + (t - t0) / (n * eps * eps)),
               m1[k]);
        add_le("velocity_l2_integral", t, 1.05 * std::max(ent[0] - ent[k], 0.0) + 1e-8,
               cvel[k]);
    }
    return rep;
}

BoundReport bound_report(const Trajectory& traj) {
    const PiecewiseConstantDensity rho0 = reconstruct_density(traj.states.front());
    return bound_report(traj, {lp_norm(rho0, 2.0), lp_norm(rho0, 3.0), lp_norm(rho0, kInf)});
}

} // namespace morse
