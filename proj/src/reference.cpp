#include "morse/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace morse {

namespace {

const double kC = std::cbrt(3.0) / 4.0;

void check_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t))
        throw std::invalid_argument("barenblatt: time must be finite and > 0");
}

// Antiderivative of the profile at fixed t, clamped outside the support.
double barenblatt_cdf_unnormalized(double x, double t) {
    const double s = 0.5 * t;
    const double si = std::cbrt(s);
    const double r = std::sqrt(12.0 * kC) * si;
    const double xc = std::clamp(x, -r, r);
    return (kC * xc - xc * xc * xc / (36.0 * si * si)) / si;
}

// Piecewise-linear CDF of a piecewise-constant density, evaluated by cell
// walk; used to project initial data onto a finite-difference grid.
class DensityCdf {
public:
    explicit DensityCdf(const PiecewiseConstantDensity& d)
        : bp_(d.breakpoints()), v_(d.values()), cum_(bp_.size(), 0.0) {
        for (std::size_t j = 0; j < v_.size(); ++j)
            cum_[j + 1] = cum_[j] + v_[j] * (bp_[j + 1] - bp_[j]);
    }

    double operator()(double x) const {
        if (x <= bp_.front()) return 0.0;
        if (x >= bp_.back()) return cum_.back();
        const auto it = std::upper_bound(bp_.begin(), bp_.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - bp_.begin()) - 1;
        return cum_[j] + v_[j] * (x - bp_[j]);
    }

private:
    const std::vector<double>& bp_;
    const std::vector<double>& v_;
    std::vector<double> cum_;
};

struct Gauss3 {
    static constexpr double node[3] = {0.0, 0.7745966692414834, -0.7745966692414834};
    static constexpr double weight[3] = {8.0 / 9.0, 5.0 / 9.0, 5.0 / 9.0};
};

} // namespace

double barenblatt(double x, double t) {
    check_time(t);
    const double s = 0.5 * t;
    const double si = std::cbrt(s);
    const double xi = x / si;
    return std::max(kC - xi * xi / 12.0, 0.0) / si;
}

double barenblatt_support_radius(double t) {
    check_time(t);
    return std::sqrt(12.0 * kC) * std::cbrt(0.5 * t);
}

PiecewiseConstantDensity barenblatt_cells(double t, std::size_t cells) {
    check_time(t);
    if (cells < 2) throw std::invalid_argument("barenblatt_cells: need at least 2 cells");
    const double r = barenblatt_support_radius(t);
    std::vector<double> bp(cells + 1), v(cells);
    for (std::size_t j = 0; j <= cells; ++j)
        bp[j] = -r + 2.0 * r * static_cast<double>(j) / static_cast<double>(cells);
    for (std::size_t j = 0; j < cells; ++j) {
        const double dm =
            barenblatt_cdf_unnormalized(bp[j + 1], t) - barenblatt_cdf_unnormalized(bp[j], t);
        v[j] = std::max(dm, 0.0) / (bp[j + 1] - bp[j]);
    }
    return PiecewiseConstantDensity(std::move(bp), std::move(v));
}

PiecewiseConstantDensity fd_pme_solve(const PiecewiseConstantDensity& rho0, double t_elapsed,
                                      double xmin, double xmax, std::size_t m, double dt) {
    if (!(xmin < xmax) || !std::isfinite(xmin) || !std::isfinite(xmax))
        throw std::invalid_argument("fd_pme_solve: invalid grid bounds");
    if (m < 4) throw std::invalid_argument("fd_pme_solve: need at least 4 grid cells");
    if (!(t_elapsed >= 0.0) || !std::isfinite(t_elapsed))
        throw std::invalid_argument("fd_pme_solve: t_elapsed must be finite and >= 0");
    if (!(dt >= 0.0) || !std::isfinite(dt))
        throw std::invalid_argument("fd_pme_solve: dt must be finite and >= 0");

    // Support of the initial density (outermost positive cells).
    const std::vector<double>& bp0 = rho0.breakpoints();
    const std::vector<double>& v0 = rho0.values();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t j = 0; j < v0.size(); ++j) {
        if (v0[j] > 0.0) {
            lo = std::min(lo, bp0[j]);
            hi = std::max(hi, bp0[j + 1]);
        }
    }
    if (!(lo < hi)) throw std::invalid_argument("fd_pme_solve: initial density has no mass");
    const double dx = (xmax - xmin) / static_cast<double>(m);
    if (xmin > lo || xmax < hi || (hi - lo) < 4.0 * dx)
        throw std::invalid_argument("fd_pme_solve: grid too coarse for the initial support");

    // Project to cell averages through the CDF, which conserves mass exactly.
    const DensityCdf cdf(rho0);
    std::vector<double> rho(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double a = xmin + dx * static_cast<double>(j);
        rho[j] = (cdf(a + dx) - cdf(a)) / dx;
    }

    std::vector<double> sq(m);
    double t = 0.0;
    while (t < t_elapsed) {
        const double peak = *std::max_element(rho.begin(), rho.end());
        double step = t_elapsed - t;
        if (peak > 0.0) step = std::min(step, 0.4 * dx * dx / (2.0 * peak));
        if (dt > 0.0) step = std::min(step, dt);
        for (std::size_t j = 0; j < m; ++j) sq[j] = rho[j] * rho[j];
        // Zero-flux boundaries: interior flux differences only.
        const double lam = step / (2.0 * dx * dx);
        double left = 0.0; // flux entering cell j from the left
        for (std::size_t j = 0; j < m; ++j) {
            const double right = (j + 1 < m) ? lam * (sq[j + 1] - sq[j]) : 0.0;
            rho[j] += right - left;
            left = right;
        }
        t += step;
    }

    std::vector<double> bp(m + 1);
    for (std::size_t j = 0; j <= m; ++j) bp[j] = xmin + dx * static_cast<double>(j);
    for (double& val : rho) val = std::max(val, 0.0); // clip roundoff-level negatives
    return PiecewiseConstantDensity(std::move(bp), std::move(rho));
}

double l2_distance(const PiecewiseConstantDensity& a, const PiecewiseConstantDensity& b) {
    std::vector<double> pts;
    pts.reserve(a.breakpoints().size() + b.breakpoints().size());
    pts.insert(pts.end(), a.breakpoints().begin(), a.breakpoints().end());
    pts.insert(pts.end(), b.breakpoints().begin(), b.breakpoints().end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double mid = 0.5 * (pts[i] + pts[i + 1]);
        const double d = a(mid) - b(mid);
        acc += d * d * (pts[i + 1] - pts[i]);
    }
    return std::sqrt(acc);
}

double l2_distance_to_barenblatt(const PiecewiseConstantDensity& a, double t) {
    check_time(t);
    const double r = barenblatt_support_radius(t);
    std::vector<double> pts(a.breakpoints());
    pts.push_back(-r);
    pts.push_back(r);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double lo = pts[i], hi = pts[i + 1];
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        const double va = a(mid);
        // (va - profile)^2 is a single quartic on this subinterval, so the
        // 3-point Gauss rule integrates it exactly.
        double cell = 0.0;
        for (int g = 0; g < 3; ++g) {
            const double x = mid + half * Gauss3::node[g];
            const double d = va - barenblatt(x, t);
            cell += Gauss3::weight[g] * d * d;
        }
        acc += cell * half;
    }
    return std::sqrt(acc);
}

} // namespace morse
