#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "lap/errors.hpp"

namespace lap::math {

/// Bracketed bisection on [lo, hi] followed by a guarded secant/Newton
/// polish. `f(lo)` and `f(hi)` must differ in sign. The polish step is only
/// taken when it stays inside the final bracket.
template <class F>
double find_root(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 400) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (std::signbit(flo) == std::signbit(fhi))
        throw numerical_error("find_root: endpoints do not bracket a root");

    for (int i = 0; i < max_iter && (hi - lo) > tol * (1.0 + std::fabs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if (std::signbit(fm) == std::signbit(flo)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }

    // secant polish across the final bracket
    double x = (std::fabs(flo) < std::fabs(fhi)) ? lo : hi;
    for (int i = 0; i < 3; ++i) {
        const double h = std::max(1e-7 * std::fabs(x), 1e-12);
        const double fx = f(x);
        const double d = (f(x + h) - f(x - h)) / (2 * h);
        if (!(d != 0.0) || !std::isfinite(d)) break;
        const double next = x - fx / d;
        if (!(next >= lo && next <= hi)) break;
        if (std::fabs(f(next)) >= std::fabs(fx)) break;
        x = next;
    }
    return x;
}

/// Grows `hi` geometrically until `f(hi)` changes sign relative to `f(lo)`.
template <class F>
std::optional<double> expand_upper(F&& f, double lo, double hi, double limit) {
    const bool s = std::signbit(f(lo));
    while (hi <= limit) {
        if (std::signbit(f(hi)) != s) return hi;
        hi *= 2.0;
    }
    return std::nullopt;
}

}  // namespace lap::math
