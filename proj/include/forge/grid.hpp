#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace forge {

// Uniform tensor grid on [-L, L]^dim with identical spacing on every axis.
struct SpatialGrid {
    int dim = 1;
    std::array<int, 4> n{1, 1, 1, 1};       // points per axis
    std::array<double, 4> x0{0, 0, 0, 0};   // first node per axis
    double h = 0.0;

    static SpatialGrid centered(int dim, double extent, int n_per_axis);

    std::size_t size() const;
    std::array<std::size_t, 4> strides() const;  // row-major, axis 0 slowest

    double coord(int axis, int i) const { return x0[axis] + h * i; }
    void decode(std::size_t flat, std::array<int, 4>& idx) const;
    std::array<double, 4> point(std::size_t flat) const;

    // True when every axis index is at least `margin` away from both ends.
    bool interior(const std::array<int, 4>& idx, int margin = 1) const;

    // Trapezoid quadrature weight (product rule: 1/2 at axis ends).
    double quad_weight(const std::array<int, 4>& idx) const;
};

using Field = std::vector<double>;  // one value per grid node, row-major

// Second-order first derivative along `axis`: central inside, one-sided
// (3-point) at the two faces.
void gradient_axis(const SpatialGrid& g, const Field& f, int axis, Field& out);

// Sum of per-axis second differences; one-sided 4-point at faces.
void laplacian(const SpatialGrid& g, const Field& f, Field& out);

// Logarithmically spaced axis for the backward-time variable.
struct LogAxis {
    std::vector<double> s;  // ascending
    int per_decade = 0;

    static LogAxis make(double s_min, double s_max, int per_decade);

    // Largest index with s[i] <= value (requires value >= s.front()).
    std::size_t at_or_below(double value) const;
};

}  // namespace forge
