#include "morse/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace morse {

namespace {

void check_density(const std::vector<double>& bp, const std::vector<double>& v) {
    if (bp.size() < 2 || v.size() + 1 != bp.size())
        throw std::invalid_argument("conv_density: need m+1 breakpoints and m values, m >= 1");
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        if (!(bp[i] < bp[i + 1]))
            throw std::invalid_argument("conv_density: breakpoints must be strictly increasing");
    }
    for (double x : bp)
        if (!std::isfinite(x)) throw std::invalid_argument("conv_density: non-finite breakpoint");
    for (double val : v) {
        if (!std::isfinite(val) || val < 0.0)
            throw std::invalid_argument("conv_density: values must be finite and >= 0");
    }
}

} // namespace

Kernel::Kernel(double epsilon) : eps_(epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("Kernel: epsilon must be finite and > 0");
}

double Kernel::w(double x) const {
    return std::exp(-std::abs(x) / eps_) / (2.0 * eps_);
}

double Kernel::w_prime(double x) const {
    if (x == 0.0) throw std::domain_error("w_prime: not differentiable at 0");
    const double s = x > 0.0 ? 1.0 : -1.0;
    return -s * std::exp(-std::abs(x) / eps_) / (2.0 * eps_ * eps_);
}

double Kernel::w_second(double x) const {
    if (x == 0.0) throw std::domain_error("w_second: undefined at 0");
    return w(x) / (eps_ * eps_);
}

std::pair<double, double> Kernel::split_parts(double x) const {
    const double a = std::abs(x) / eps_;
    const double n_part = (1.0 - a) / (2.0 * eps_);
    // s_part = (e^{-a} - 1 + a) / (2 eps); expm1 keeps it accurate near 0.
    const double s_part = (std::expm1(-a) + a) / (2.0 * eps_);
    return {n_part, s_part};
}

ConvScan conv_scan(const Kernel& k,
                   const std::vector<double>& bp,
                   const std::vector<double>& v,
                   const std::vector<double>& q) {
    check_density(bp, v);
    for (std::size_t i = 0; i + 1 < q.size(); ++i)
        if (!(q[i] <= q[i + 1]))
            throw std::invalid_argument("conv_density: queries must be sorted ascending");
    for (double x : q)
        if (!std::isfinite(x)) throw std::invalid_argument("conv_density: non-finite query");

    const double eps = k.epsilon();
    const std::size_t m = v.size(), nq = q.size();
    ConvScan out;
    out.left.assign(nq, 0.0);
    out.right.assign(nq, 0.0);
    out.cell.assign(nq, -1);

    // Left pass: acc = sum over cells with b_j <= pos of v_j*(e^{-(pos-b_j)/e} - e^{-(pos-a_j)/e})/2,
    // carried at the current position and decayed as the position advances.
    // The accumulator runs in extended precision and the cell-mass term uses
    // expm1: cell values can be orders of magnitude above the O(1/eps)
    // result on near-degenerate cells, and both would otherwise leak
    // magnified roundoff into the output.
    {
        long double acc = 0.0L;
        double pos = bp.front();
        std::size_t j = 0; // next cell to absorb (absorbed when pos reaches bp[j+1])
        for (std::size_t i = 0; i < nq; ++i) {
            const double x = q[i];
            while (j < m && bp[j + 1] <= x) {
                acc *= std::exp(-(bp[j + 1] - pos) / eps);
                acc += static_cast<long double>(v[j]) * 0.5L *
                       (-static_cast<long double>(std::expm1(-(bp[j + 1] - bp[j]) / eps)));
                pos = bp[j + 1];
                ++j;
            }
            if (x > pos) {
                acc *= std::exp(-(x - pos) / eps);
                pos = x;
            }
            out.left[i] = static_cast<double>(acc);
        }
    }
    // Right pass, mirrored: cells with a_j >= pos.
    {
        long double acc = 0.0L;
        double pos = bp.back();
        std::size_t j = m; // cells j..m-1 absorbed; absorb cell j-1 when pos reaches bp[j-1]
        for (std::size_t ii = nq; ii-- > 0;) {
            const double x = q[ii];
            while (j > 0 && bp[j - 1] >= x) {
                acc *= std::exp(-(pos - bp[j - 1]) / eps);
                acc += static_cast<long double>(v[j - 1]) * 0.5L *
                       (-static_cast<long double>(std::expm1(-(bp[j] - bp[j - 1]) / eps)));
                pos = bp[j - 1];
                --j;
            }
            if (x < pos) {
                acc *= std::exp(-(pos - x) / eps);
                pos = x;
            }
            out.right[ii] = static_cast<double>(acc);
        }
    }
    // Containing cell / breakpoint classification.
    {
        std::size_t j = 0;
        for (std::size_t i = 0; i < nq; ++i) {
            const double x = q[i];
            if (x < bp.front() || x > bp.back()) { out.cell[i] = -1; continue; }
            while (j + 1 < bp.size() && bp[j + 1] < x) ++j;
            // bp[j] <= ~x <= bp[j+1]
            if (x == bp[j]) out.cell[i] = -2 - static_cast<long>(j);
            else if (j + 1 < bp.size() && x == bp[j + 1]) out.cell[i] = -2 - static_cast<long>(j + 1);
            else out.cell[i] = static_cast<long>(j);
        }
    }
    return out;
}

std::vector<double> conv_density(const Kernel& k,
                                 const std::vector<double>& bp,
                                 const std::vector<double>& v,
                                 const std::vector<double>& q,
                                 int order) {
    if (order < 0 || order > 2)
        throw std::invalid_argument("conv_density: order must be 0, 1 or 2");
    const ConvScan s = conv_scan(k, bp, v, q);
    const double eps = k.epsilon();
    std::vector<double> out(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double L = s.left[i], R = s.right[i];
        double inside0 = 0.0, inside1 = 0.0, inside2 = 0.0;
        if (s.cell[i] >= 0) {
            const std::size_t c = static_cast<std::size_t>(s.cell[i]);
            const double A = std::exp(-(q[i] - bp[c]) / eps);
            const double B = std::exp(-(bp[c + 1] - q[i]) / eps);
            inside0 = v[c] * (1.0 - 0.5 * (A + B));
            inside1 = v[c] * (A - B) / (2.0 * eps);
            inside2 = -v[c] * (A + B) / (2.0 * eps * eps);
        } else if (s.cell[i] <= -2) {
            // Exactly on breakpoint j: orders 0/1 are continuous and fully
            // covered by the left/right sums; order 2 gets the mean of the
            // one-sided limits, i.e. minus the mean of adjacent cell values / eps^2.
            const std::size_t j = static_cast<std::size_t>(-2 - s.cell[i]);
            const double vl = j > 0 ? v[j - 1] : 0.0;
            const double vr = j < v.size() ? v[j] : 0.0;
            inside2 = -0.5 * (vl + vr) / (eps * eps);
        }
        switch (order) {
            case 0: out[i] = L + R + inside0; break;
            case 1: out[i] = (R - L) / eps + inside1; break;
            case 2: out[i] = (L + R) / (eps * eps) + inside2; break;
        }
    }
    return out;
}

} // namespace morse
