#include "forge/cutoff.hpp"

#include <cmath>
#include <stdexcept>

namespace forge {
namespace {

double g(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double g_d1(double t) { return t > 0.0 ? g(t) / (t * t) : 0.0; }
double g_d2(double t) {
    return t > 0.0 ? g(t) * (1.0 - 2.0 * t) / (t * t * t * t) : 0.0;
}

}  // namespace

double chi(double r) {
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    const double u = g(2.0 - r), v = g(r - 1.0);
    return u / (u + v);
}

double chi_d1(double r) {
    if (r <= 1.0 || r >= 2.0) return 0.0;
    const double u = g(2.0 - r), v = g(r - 1.0);
    const double up = -g_d1(2.0 - r), vp = g_d1(r - 1.0);
    const double den = u + v;
    return (up * v - u * vp) / (den * den);
}

double chi_d2(double r) {
    if (r <= 1.0 || r >= 2.0) return 0.0;
    const double u = g(2.0 - r), v = g(r - 1.0);
    const double up = -g_d1(2.0 - r), vp = g_d1(r - 1.0);
    const double upp = g_d2(2.0 - r), vpp = g_d2(r - 1.0);
    const double den = u + v;
    return ((upp * v - u * vpp) * den - 2.0 * (up * v - u * vp) * (up + vp)) /
           (den * den * den);
}

double BumpA::base(double r) { return r - chi(r); }
double BumpA::base_d1(double r) { return 1.0 - chi_d1(r); }
double BumpA::base_d2(double r) { return -chi_d2(r); }

BumpA::BumpA(int k) : k_(k) {
    if (k < 2) throw std::invalid_argument("bump order must be at least 2");
}

double BumpA::radial(double r) const {
    if (r <= 1.0) return 0.0;
    if (r <= 2.0) return std::pow(base(r), k_);
    return std::pow(r, k_);
}

double BumpA::radial_d1(double r) const {
    if (r <= 1.0) return 0.0;
    if (r <= 2.0) return k_ * std::pow(base(r), k_ - 1) * base_d1(r);
    return k_ * std::pow(r, k_ - 1);
}

double BumpA::radial_d2(double r) const {
    if (r <= 1.0) return 0.0;
    if (r <= 2.0) {
        const double b = base(r), b1 = base_d1(r), b2 = base_d2(r);
        return k_ * (k_ - 1) * std::pow(b, k_ - 2) * b1 * b1 +
               k_ * std::pow(b, k_ - 1) * b2;
    }
    return k_ * (k_ - 1) * std::pow(r, k_ - 2);
}

double BumpA::operator()(const std::array<double, 4>& x, int dim) const {
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
    return radial(std::sqrt(r2));
}

void BumpA::gradient(const std::array<double, 4>& x, int dim,
                     std::array<double, 4>& grad) const {
    grad.fill(0.0);
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
    const double r = std::sqrt(r2);
    if (r <= 1.0) return;
    const double d1 = radial_d1(r);
    for (int i = 0; i < dim; ++i) grad[i] = d1 * x[i] / r;
}

void BumpA::hessian(const std::array<double, 4>& x, int dim,
                    std::array<std::array<double, 4>, 4>& hess) const {
    for (auto& row : hess) row.fill(0.0);
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
    const double r = std::sqrt(r2);
    if (r <= 1.0) return;
    const double d1 = radial_d1(r), d2 = radial_d2(r);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            const double nij = x[i] * x[j] / r2;
            hess[i][j] = d2 * nij + d1 * ((i == j ? 1.0 : 0.0) - nij) / r;
        }
}

double BumpA::laplacian(const std::array<double, 4>& x, int dim) const {
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
    const double r = std::sqrt(r2);
    if (r <= 1.0) return 0.0;
    return radial_d2(r) + (dim - 1) * radial_d1(r) / r;
}

}  // namespace forge
