#pragma once

#include <cmath>
#include <stdexcept>

namespace forge {

// Bracketed scalar root solve: secant step when it stays inside the bracket,
// bisection otherwise.  fn must change sign on [lo, hi].
template <typename Fn>
double solve_bracketed(Fn&& fn, double lo, double hi, double tol = 1e-12,
                       int max_iter = 60) {
    double flo = fn(lo), fhi = fn(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0)
        throw std::runtime_error("solve_bracketed: no sign change on bracket");
    for (int it = 0; it < max_iter; ++it) {
        double mid = 0.5 * (lo + hi);
        const double denom = fhi - flo;
        if (denom != 0.0) {
            const double sec = lo - flo * (hi - lo) / denom;
            if (sec > lo + 0.01 * (hi - lo) && sec < hi - 0.01 * (hi - lo))
                mid = sec;
        }
        const double fmid = fn(mid);
        if (fmid == 0.0 || hi - lo < tol) return mid;
        if (flo * fmid < 0.0) {
            hi = mid;
            fhi = fmid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace forge
