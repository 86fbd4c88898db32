#include "forge/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace forge {

double p_upper_limit(int dim) {
    if (dim <= 2) return std::numeric_limits<double>::infinity();
    return static_cast<double>(dim + 2) / (dim - 2);
}

ModelParams derive_params(int dim, double p, std::optional<int> k_override) {
    if (dim < 1 || dim > 4)
        throw ParamError("dim outside 1..4: got " + std::to_string(dim));
    if (!(p > 1.0))
        throw ParamError("p must exceed 1: got " + std::to_string(p));
    if (p > p_upper_limit(dim))
        throw ParamError("p above the admissible limit " +
                         std::to_string(p_upper_limit(dim)) + " for dim " +
                         std::to_string(dim));

    ModelParams mp;
    mp.dim = dim;
    mp.p = p;

    // Floor/ceil with a nudge so exact-integer arguments land on the integer
    // rather than one below/above it after rounding noise.
    const double jx = (2.0 * p + 2.0) / (p - 1.0);
    mp.J = static_cast<int>(std::floor(jx + 1e-12));
    mp.q0 = 2 * mp.J + 3;

    // J - (p+3)/(p-1) = floor(x) + 1 - x for x = (p+3)/(p-1), always in (0,1].
    mp.lambda = std::min(0.5 * (mp.J - (p + 3.0) / (p - 1.0)), 1.0 / p);
    if (!(mp.lambda > 0.0))
        throw ParamError("degenerate decay exponent at p = " + std::to_string(p));

    const double kx =
        2.0 * (p + 1.0 + mp.lambda * (p - 1.0)) / (mp.lambda * (p - 1.0));
    int k_min = std::max(mp.q0 + 1, static_cast<int>(std::ceil(kx - 1e-9)));
    if (k_override) {
        if (*k_override < k_min)
            throw ParamError("k_override below the admissible minimum " +
                             std::to_string(k_min));
        mp.k = *k_override;
    } else {
        mp.k = k_min;
    }

    mp.kappa0 = std::pow(2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0)),
                         1.0 / (p - 1.0));
    return mp;
}

}  // namespace forge
