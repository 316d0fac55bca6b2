#ifndef MORSE_KERNEL_HPP
#define MORSE_KERNEL_HPP

#include <cstddef>
#include <utility>
#include <vector>

namespace morse {

// Smoothing kernel w(x) = e^{-|x|/eps} / (2 eps): even, unit mass, peak 1/(2 eps).
// It satisfies the distributional identity  -eps^2 w'' + w = delta_0,  which makes
// convolutions against piecewise-constant densities exactly computable per cell.
class Kernel {
public:
    explicit Kernel(double epsilon);

    double epsilon() const { return eps_; }

    double w(double x) const;
    // Classical derivative; undefined at the tip x = 0 (throws std::domain_error).
    double w_prime(double x) const;
    // Away from 0, w''(x) = w(x)/eps^2; undefined at x = 0.
    double w_second(double x) const;

    // Decomposition w = n_part + s_part with n_part(x) = (1 - |x|/eps)/(2 eps)
    // (tent, carries the singularity) and s_part = w - n_part (C^1, with
    // sup |s_part''| = 1/(2 eps^3)).  Returns (n_part(x), s_part(x)).
    std::pair<double, double> split_parts(double x) const;

private:
    double eps_;
};

// Convolution of the kernel (order 0), its derivative (order 1) or second
// derivative (order 2) against a piecewise-constant density:
//   breakpoints: strictly increasing, size m+1;  values >= 0, size m.
// queries must be sorted ascending.  Runs in O(m + queries) by a two-pass
// exponential prefix recursion; only decay factors e^{-dx/eps} in (0,1] are
// ever formed, so no overflow for any cell layout.  Orders 0 and 1 are
// continuous across breakpoints; order 2 jumps there and queries exactly at a
// breakpoint get the mean of the one-sided limits.
std::vector<double> conv_density(const Kernel& k,
                                 const std::vector<double>& breakpoints,
                                 const std::vector<double>& values,
                                 const std::vector<double>& queries,
                                 int order);

// Per-query decomposition used by conv_density and by the closed-form
// integral diagnostics: left[i]  = sum over cells entirely left of queries[i]
// of v * (e^{-(x-b)/eps} - e^{-(x-a)/eps})/2, right[i] symmetric, and
// cell[i] = index of the cell strictly containing queries[i] (-1 if none,
// -2 - j if the query sits exactly on breakpoint j).
struct ConvScan {
    std::vector<double> left;
    std::vector<double> right;
    std::vector<long> cell;
};
ConvScan conv_scan(const Kernel& k,
                   const std::vector<double>& breakpoints,
                   const std::vector<double>& values,
                   const std::vector<double>& queries);

} // namespace morse

#endif
