#include "forge/fit.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace forge {

double PowerFit::eval(double x) const {
    return std::pow(10.0, log10_prefactor + exponent * std::log10(x));
}

PowerFit fit_exponent(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("fit_exponent: size mismatch");
    if (x.size() < 8)
        throw std::invalid_argument("fit_exponent: need at least 8 points");

    std::vector<double> lx(x.size()), ly(y.size());
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("fit_exponent: nonpositive sample");
        lx[i] = std::log10(x[i]);
        ly[i] = std::log10(y[i]);
        lo = std::min(lo, lx[i]);
        hi = std::max(hi, lx[i]);
    }
    if (hi - lo < 1.0 - 1e-9)
        throw std::invalid_argument("fit_exponent: x must span at least one decade");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double det = n * sxx - sx * sx;
    PowerFit fit;
    fit.exponent = (n * sxy - sx * sy) / det;
    fit.log10_prefactor = (sy * sxx - sx * sxy) / det;
    fit.npoints = x.size();

    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = ly[i] - (fit.log10_prefactor + fit.exponent * lx[i]);
        ss += r * r;
    }
    fit.rms = std::sqrt(ss / n);
    return fit;
}

}  // namespace forge
