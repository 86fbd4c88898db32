#pragma once

#include <cstddef>
#include <span>

namespace forge {

// Least-squares power-law fit y = C * x^e through (log10 x, log10 y).
struct PowerFit {
    double exponent = 0.0;
    double log10_prefactor = 0.0;
    double rms = 0.0;  // rms residual in log10(y)
    std::size_t npoints = 0;

    double eval(double x) const;
};

// Requires at least 8 strictly positive samples spanning at least one decade
// in x; throws std::invalid_argument otherwise.
PowerFit fit_exponent(std::span<const double> x, std::span<const double> y);

}  // namespace forge
