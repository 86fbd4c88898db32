#include "forge/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace forge {

SpatialGrid SpatialGrid::centered(int dim, double extent, int n_per_axis) {
    if (dim < 1 || dim > 4) throw std::invalid_argument("grid dim outside 1..4");
    if (n_per_axis < 5) throw std::invalid_argument("grid needs at least 5 points per axis");
    if (!(extent > 0.0)) throw std::invalid_argument("grid extent must be positive");
    SpatialGrid g;
    g.dim = dim;
    g.h = 2.0 * extent / (n_per_axis - 1);
    for (int a = 0; a < dim; ++a) {
        g.n[a] = n_per_axis;
        g.x0[a] = -extent;
    }
    return g;
}

std::size_t SpatialGrid::size() const {
    std::size_t s = 1;
    for (int a = 0; a < dim; ++a) s *= static_cast<std::size_t>(n[a]);
    return s;
}

std::array<std::size_t, 4> SpatialGrid::strides() const {
    std::array<std::size_t, 4> st{0, 0, 0, 0};
    std::size_t acc = 1;
    for (int a = dim - 1; a >= 0; --a) {
        st[a] = acc;
        acc *= static_cast<std::size_t>(n[a]);
    }
    return st;
}

void SpatialGrid::decode(std::size_t flat, std::array<int, 4>& idx) const {
    const auto st = strides();
    for (int a = 0; a < dim; ++a) {
        idx[a] = static_cast<int>(flat / st[a]);
        flat %= st[a];
    }
    for (int a = dim; a < 4; ++a) idx[a] = 0;
}

std::array<double, 4> SpatialGrid::point(std::size_t flat) const {
    std::array<int, 4> idx;
    decode(flat, idx);
    std::array<double, 4> x{0, 0, 0, 0};
    for (int a = 0; a < dim; ++a) x[a] = coord(a, idx[a]);
    return x;
}

bool SpatialGrid::interior(const std::array<int, 4>& idx, int margin) const {
    for (int a = 0; a < dim; ++a)
        if (idx[a] < margin || idx[a] >= n[a] - margin) return false;
    return true;
}

double SpatialGrid::quad_weight(const std::array<int, 4>& idx) const {
    double w = 1.0;
    for (int a = 0; a < dim; ++a) {
        w *= h;
        if (idx[a] == 0 || idx[a] == n[a] - 1) w *= 0.5;
    }
    return w;
}

void gradient_axis(const SpatialGrid& g, const Field& f, int axis, Field& out) {
    const auto st = g.strides();
    const std::size_t stride = st[axis];
    const int na = g.n[axis];
    const double inv2h = 1.0 / (2.0 * g.h);
    out.resize(f.size());
    std::array<int, 4> idx;
    for (std::size_t i = 0; i < f.size(); ++i) {
        g.decode(i, idx);
        const int ia = idx[axis];
        if (ia > 0 && ia < na - 1) {
            out[i] = (f[i + stride] - f[i - stride]) * inv2h;
        } else if (ia == 0) {
            out[i] = (-3.0 * f[i] + 4.0 * f[i + stride] - f[i + 2 * stride]) * inv2h;
        } else {
            out[i] = (3.0 * f[i] - 4.0 * f[i - stride] + f[i - 2 * stride]) * inv2h;
        }
    }
}

void laplacian(const SpatialGrid& g, const Field& f, Field& out) {
    out.assign(f.size(), 0.0);
    const auto st = g.strides();
    const double invh2 = 1.0 / (g.h * g.h);
    std::array<int, 4> idx;
    for (std::size_t i = 0; i < f.size(); ++i) {
        g.decode(i, idx);
        double acc = 0.0;
        for (int a = 0; a < g.dim; ++a) {
            const std::size_t s = st[a];
            const int ia = idx[a], na = g.n[a];
            if (ia > 0 && ia < na - 1) {
                acc += f[i + s] - 2.0 * f[i] + f[i - s];
            } else if (ia == 0) {
                acc += 2.0 * f[i] - 5.0 * f[i + s] + 4.0 * f[i + 2 * s] - f[i + 3 * s];
            } else {
                acc += 2.0 * f[i] - 5.0 * f[i - s] + 4.0 * f[i - 2 * s] - f[i - 3 * s];
            }
        }
        out[i] = acc * invh2;
    }
}

LogAxis LogAxis::make(double s_min, double s_max, int per_decade) {
    if (!(s_min > 0.0) || !(s_max > s_min))
        throw std::invalid_argument("log axis needs 0 < s_min < s_max");
    if (per_decade < 8)
        throw std::invalid_argument("log axis needs at least 8 nodes per decade");
    LogAxis ax;
    ax.per_decade = per_decade;
    const double decades = std::log10(s_max / s_min);
    const int count = static_cast<int>(std::ceil(decades * per_decade - 1e-9)) + 1;
    ax.s.resize(count);
    for (int i = 0; i < count; ++i)
        ax.s[i] = s_min * std::pow(10.0, decades * i / (count - 1));
    ax.s.front() = s_min;
    ax.s.back() = s_max;
    return ax;
}

std::size_t LogAxis::at_or_below(double value) const {
    if (value < s.front())
        throw std::out_of_range("log axis query below range");
    std::size_t lo = 0, hi = s.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi + 1) / 2;
        if (s[mid] <= value * (1.0 + 1e-12))
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

}  // namespace forge
