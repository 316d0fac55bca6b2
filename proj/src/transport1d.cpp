#include "morse/transport1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace morse {

namespace {

void check_breakpoints(const std::vector<double>& bp, const std::vector<double>& v) {
    if (bp.size() < 2 || v.size() + 1 != bp.size())
        throw std::invalid_argument("density: need m+1 breakpoints and m values, m >= 1");
    for (std::size_t i = 0; i + 1 < bp.size(); ++i)
        if (!(bp[i] < bp[i + 1]))
            throw std::invalid_argument("density: breakpoints must be strictly increasing");
    for (double x : bp)
        if (!std::isfinite(x)) throw std::invalid_argument("density: non-finite breakpoint");
    for (double val : v)
        if (!std::isfinite(val) || val < 0.0)
            throw std::invalid_argument("density: values must be finite and >= 0");
}

struct Piece { // one positive-mass component of a measure, in x-order
    double a, b;   // interval (a == b for an atom)
    double value;  // density value, or atom weight when a == b
};

// Merge density cells and atoms into an x-ordered piece list, splitting cells
// at interior atom positions.  Atoms at a shared position are pre-merged.
std::vector<Piece> make_pieces(const std::vector<double>& bp, const std::vector<double>& v,
                               std::vector<Atom> atoms) {
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& x, const Atom& y) { return x.position < y.position; });
    std::vector<Atom> merged;
    for (const Atom& a : atoms) {
        if (!merged.empty() && merged.back().position == a.position)
            merged.back().weight += a.weight;
        else
            merged.push_back(a);
    }
    std::vector<Piece> pieces;
    std::size_t ai = 0;
    auto flush_atoms_before = [&](double x) {
        while (ai < merged.size() && merged[ai].position <= x) {
            pieces.push_back({merged[ai].position, merged[ai].position, merged[ai].weight});
            ++ai;
        }
    };
    for (std::size_t c = 0; c + 1 < bp.size(); ++c) {
        double a = bp[c];
        const double b = bp[c + 1];
        flush_atoms_before(a);
        while (ai < merged.size() && merged[ai].position < b) {
            if (merged[ai].position > a) pieces.push_back({a, merged[ai].position, v[c]});
            pieces.push_back({merged[ai].position, merged[ai].position, merged[ai].weight});
            a = merged[ai].position;
            ++ai;
        }
        if (b > a) pieces.push_back({a, b, v[c]});
    }
    flush_atoms_before(std::numeric_limits<double>::infinity());
    return pieces;
}

// Exact quantile knots of the measure given by pieces (total mass ~ 1; the z
// axis is rescaled so the last knot is exactly 1).
void build_quantile_knots(const std::vector<Piece>& pieces,
                          std::vector<double>& z, std::vector<double>& x) {
    z.clear();
    x.clear();
    double zc = 0.0;
    auto ensure_knot = [&](double at) {
        if (x.empty() || x.back() != at || z.back() != zc) {
            if (x.empty() || x.back() < at || z.back() < zc) {
                z.push_back(zc);
                x.push_back(at);
            }
        }
    };
    for (const Piece& p : pieces) {
        if (p.a == p.b) { // atom
            ensure_knot(p.a);
            zc += p.value;
            z.push_back(zc);
            x.push_back(p.a);
        } else {
            const double dm = p.value * (p.b - p.a);
            if (dm <= 0.0) continue; // zero-density cell: gap, becomes a jump
            ensure_knot(p.a);
            zc += dm;
            z.push_back(zc);
            x.push_back(p.b);
        }
    }
    if (z.size() < 2) throw std::invalid_argument("quantile_of: measure has no mass");
    const double total = z.back();
    if (!(total > 0.0)) throw std::invalid_argument("quantile_of: measure has no mass");
    for (double& zz : z) zz /= total;
    z.front() = 0.0;
    z.back() = 1.0;
}

} // namespace

PiecewiseConstantDensity::PiecewiseConstantDensity(std::vector<double> breakpoints,
                                                  std::vector<double> values)
    : bp_(std::move(breakpoints)), v_(std::move(values)) {
    check_breakpoints(bp_, v_);
    double m = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) m += v_[i] * (bp_[i + 1] - bp_[i]);
    mass_ = m;
}

PiecewiseConstantDensity::PiecewiseConstantDensity(std::vector<double> breakpoints,
                                                  std::vector<double> values, double known_mass)
    : bp_(std::move(breakpoints)), v_(std::move(values)), mass_(known_mass) {
    check_breakpoints(bp_, v_);
}

double PiecewiseConstantDensity::operator()(double x) const {
    if (x < bp_.front() || x >= bp_.back()) return 0.0;
    const auto it = std::upper_bound(bp_.begin(), bp_.end(), x);
    return v_[static_cast<std::size_t>(it - bp_.begin()) - 1];
}

double MeasureSpec::mass() const {
    double m = density ? density->mass() : 0.0;
    for (const Atom& a : atoms) m += a.weight;
    return m;
}

void MeasureSpec::validate_probability() const {
    for (const Atom& a : atoms) {
        if (!std::isfinite(a.position) || !std::isfinite(a.weight) || a.weight <= 0.0)
            throw std::invalid_argument("measure: atoms need finite position and weight > 0");
    }
    if (!density && atoms.empty())
        throw std::invalid_argument("measure: empty");
    if (std::abs(mass() - 1.0) > 1e-12)
        throw std::invalid_argument("measure: mass must be 1 within 1e-12");
}

QuantileFn::QuantileFn(std::vector<double> z, std::vector<double> x)
    : z_(std::move(z)), x_(std::move(x)) {
    if (z_.size() != x_.size() || z_.size() < 2)
        throw std::invalid_argument("quantile: need matching knot lists, size >= 2");
    if (z_.front() != 0.0 || z_.back() != 1.0)
        throw std::invalid_argument("quantile: z must start at 0 and end at 1");
    for (std::size_t i = 0; i < z_.size(); ++i) {
        if (!std::isfinite(z_[i]) || !std::isfinite(x_[i]))
            throw std::invalid_argument("quantile: non-finite knot");
        if (i > 0 && (z_[i] < z_[i - 1] || x_[i] < x_[i - 1]))
            throw std::invalid_argument("quantile: knots must be nondecreasing");
    }
}

double QuantileFn::operator()(double z) const {
    if (!(z >= 0.0 && z <= 1.0))
        throw std::invalid_argument("quantile: argument outside [0,1]");
    const auto it = std::lower_bound(z_.begin(), z_.end(), z);
    const std::size_t i = static_cast<std::size_t>(it - z_.begin());
    if (z_[i] == z) return x_[i]; // lowest branch at a duplicated z
    // z_[i-1] < z < z_[i]
    const double t = (z - z_[i - 1]) / (z_[i] - z_[i - 1]);
    return x_[i - 1] + t * (x_[i] - x_[i - 1]);
}

QuantileFn quantile_of(const MeasureSpec& m, std::size_t grid) {
    if (grid < 2) throw std::invalid_argument("quantile_of: grid must be >= 2");
    m.validate_probability();
    static const std::vector<double> no_bp = {0.0, 1.0};
    static const std::vector<double> no_v = {0.0};
    const std::vector<Piece> pieces =
        m.density ? make_pieces(m.density->breakpoints(), m.density->values(), m.atoms)
                  : make_pieces(no_bp, no_v, m.atoms);
    std::vector<double> z, x;
    build_quantile_knots(pieces, z, x);
    return QuantileFn(std::move(z), std::move(x));
}

double wasserstein2(const QuantileFn& a, const QuantileFn& b) {
    const std::vector<double>&za = a.z(), &zb = b.z();
    std::vector<double> zs;
    zs.reserve(za.size() + zb.size());
    std::merge(za.begin(), za.end(), zb.begin(), zb.end(), std::back_inserter(zs));
    zs.erase(std::unique(zs.begin(), zs.end()), zs.end());

    auto segment_values = [](const QuantileFn& f, std::size_t& s, double z1, double z2,
                             double& f1, double& f2) {
        const std::vector<double>& z = f.z();
        const std::vector<double>& x = f.x();
        while (s + 2 < z.size() && z[s + 1] <= z1) ++s;
        // now z[s] <= z1 < z2 <= z[s+1] and the segment has positive width
        const double w = z[s + 1] - z[s];
        f1 = x[s] + (z1 - z[s]) / w * (x[s + 1] - x[s]);
        f2 = x[s] + (z2 - z[s]) / w * (x[s + 1] - x[s]);
    };

    double acc = 0.0;
    std::size_t sa = 0, sb = 0;
    for (std::size_t i = 0; i + 1 < zs.size(); ++i) {
        const double z1 = zs[i], z2 = zs[i + 1];
        if (!(z2 > z1)) continue;
        double a1, a2, b1, b2;
        segment_values(a, sa, z1, z2, a1, a2);
        segment_values(b, sb, z1, z2, b1, b2);
        const double dl = a1 - b1, dr = a2 - b2;
        acc += (z2 - z1) * (dl * dl + dl * dr + dr * dr) / 3.0;
    }
    return std::sqrt(std::max(acc, 0.0));
}

std::vector<double> atomize_lp(const PiecewiseConstantDensity& rho, std::size_t n) {
    if (n < 2) throw std::invalid_argument("atomize_lp: need N >= 2");
    if (std::abs(rho.mass() - 1.0) > 1e-12)
        throw std::invalid_argument("atomize_lp: density mass must be 1 within 1e-12");
    const double radius = static_cast<double>(n);
    const std::vector<double>& bp = rho.breakpoints();
    const std::vector<double>& v = rho.values();

    // Escaped mass outside [-N, N], computed cell by cell with clipping.
    double escaped = 0.0;
    std::vector<double> tb{-radius}; // truncated breakpoints
    std::vector<double> tv;          // truncated values (before padding)
    for (std::size_t c = 0; c + 1 < bp.size(); ++c) {
        const double a = bp[c], b = bp[c + 1];
        const double ca = std::max(a, -radius), cb = std::min(b, radius);
        if (cb > ca) {
            if (ca > tb.back()) { tv.push_back(0.0); tb.push_back(ca); }
            tv.push_back(v[c]);
            tb.push_back(cb);
        }
        escaped += v[c] * ((std::min(b, -radius) - std::min(a, -radius)) +
                           (std::max(b, radius) - std::max(a, radius)));
    }
    if (tb.back() < radius) { tv.push_back(0.0); tb.push_back(radius); }
    const double pad = escaped / (2.0 * radius); // density (m_N+M_N)/(2N) over [-N,N]
    for (double& val : tv) val += pad;

    std::vector<double> cum(tb.size(), 0.0);
    for (std::size_t c = 0; c < tv.size(); ++c)
        cum[c + 1] = cum[c] + tv[c] * (tb[c + 1] - tb[c]);
    const double total = cum.back();

    std::vector<double> out(n + 1);
    out[0] = -radius;
    for (std::size_t i = 1; i <= n; ++i) {
        const double target = (i == n) ? total
                                       : total * static_cast<double>(i) / static_cast<double>(n);
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        std::size_t j = static_cast<std::size_t>(it - cum.begin());
        if (j == cum.size()) j = cum.size() - 1;
        if (cum[j] == target) {
            out[i] = tb[j];
        } else {
            out[i] = tb[j - 1] + (target - cum[j - 1]) / tv[j - 1];
        }
    }
    for (std::size_t i = 0; i + 1 < out.size(); ++i)
        if (!(out[i] < out[i + 1]))
            throw std::invalid_argument("atomize_lp: produced non-increasing positions "
                                        "(density not in L^p?)");
    return out;
}

std::vector<double> atomize_measure(const MeasureSpec& m, std::size_t n) {
    if (n < 2) throw std::invalid_argument("atomize_measure: need N >= 2");
    m.validate_probability();
    const double radius = static_cast<double>(n);

    // Truncate to [-N, N]; escaped mass spreads uniformly over [-N,0) / [0,N].
    double m_left = 0.0, m_right = 0.0;
    std::vector<double> tb, tv;
    if (m.density) {
        const std::vector<double>& bp = m.density->breakpoints();
        const std::vector<double>& v = m.density->values();
        tb.push_back(std::clamp(bp.front(), -radius, radius));
        for (std::size_t c = 0; c + 1 < bp.size(); ++c) {
            const double a = bp[c], b = bp[c + 1];
            m_left += v[c] * (std::min(b, -radius) - std::min(a, -radius));
            m_right += v[c] * (std::max(b, radius) - std::max(a, radius));
            const double ca = std::max(a, -radius), cb = std::min(b, radius);
            if (cb > ca) {
                if (tb.empty()) tb.push_back(ca);
                else if (ca > tb.back()) { tv.push_back(0.0); tb.push_back(ca); }
                tv.push_back(v[c]);
                tb.push_back(cb);
            }
        }
        if (tv.empty()) { tb.assign({-radius, radius}); tv.assign({0.0}); }
    }
    std::vector<Atom> kept;
    for (const Atom& a : m.atoms) {
        if (a.position < -radius) m_left += a.weight;
        else if (a.position > radius) m_right += a.weight;
        else kept.push_back(a);
    }
    // Overlay the uniform escaped-mass blocks by merging breakpoint grids.
    std::vector<double> gb{-radius, 0.0, radius};
    for (double x : tb) gb.push_back(x);
    std::sort(gb.begin(), gb.end());
    gb.erase(std::unique(gb.begin(), gb.end()), gb.end());
    std::vector<double> gv(gb.size() - 1, 0.0);
    for (std::size_t c = 0; c + 1 < gb.size(); ++c) {
        const double mid = 0.5 * (gb[c] + gb[c + 1]);
        double val = 0.0;
        if (!tv.empty() && mid > tb.front() && mid < tb.back()) {
            const auto it = std::upper_bound(tb.begin(), tb.end(), mid);
            val += tv[static_cast<std::size_t>(it - tb.begin()) - 1];
        }
        if (m_left > 0.0 && mid < 0.0) val += m_left / radius;
        if (m_right > 0.0 && mid > 0.0) val += m_right / radius;
        gv[c] = val;
    }

    const std::vector<Piece> pieces = make_pieces(gb, gv, kept);
    std::vector<double> z, x;
    build_quantile_knots(pieces, z, x);
    const QuantileFn q(std::move(z), std::move(x));
    std::vector<double> out(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        out[i] = q(static_cast<double>(i) / static_cast<double>(n));
    return out;
}

PiecewiseConstantDensity density_of_quantile(const QuantileFn& q) {
    const std::vector<double>& z = q.z();
    const std::vector<double>& x = q.x();
    std::vector<double> bp, v;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        const double dz = z[i + 1] - z[i], dx = x[i + 1] - x[i];
        if (dx == 0.0) {
            if (dz > 0.0)
                throw std::invalid_argument(
                    "density_of_quantile: flat segment (atom) has no density");
            continue; // redundant knot
        }
        if (bp.empty()) bp.push_back(x[i]);
        v.push_back(dz / dx);
        bp.push_back(x[i + 1]);
    }
    if (v.empty())
        throw std::invalid_argument("density_of_quantile: quantile is a single atom");
    return PiecewiseConstantDensity(std::move(bp), std::move(v), z.back() - z.front());
}

} // namespace morse
