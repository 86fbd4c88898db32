#pragma once

#include <array>

namespace forge {

// Smooth bridge: 1 on (-inf,1], 0 on [2,inf), strictly monotone between.
// chi(r) = g(2-r) / (g(2-r) + g(r-1)) with g(t) = exp(-1/t) for t>0, else 0.
double chi(double r);
double chi_d1(double r);
double chi_d2(double r);

// Flat-bottomed envelope of sharpness k:
//   A(x) = 0                     for |x| <= 1
//   A(x) = (|x| - chi(|x|))^k    for 1 < |x| <= 2
//   A(x) = |x|^k                 for |x| > 2
// C^k across |x|=1 (vanishes like (|x|-1)^k), C^inf across |x|=2.
class BumpA {
public:
    explicit BumpA(int k);

    int order() const { return k_; }

    double radial(double r) const;       // A as a function of r = |x|
    double radial_d1(double r) const;    // dA/dr
    double radial_d2(double r) const;    // d2A/dr2

    double operator()(const std::array<double, 4>& x, int dim) const;
    // grad[i] = dA/dx_i; hess[i][j] filled for i,j < dim.
    void gradient(const std::array<double, 4>& x, int dim,
                  std::array<double, 4>& grad) const;
    void hessian(const std::array<double, 4>& x, int dim,
                 std::array<std::array<double, 4>, 4>& hess) const;
    double laplacian(const std::array<double, 4>& x, int dim) const;

private:
    int k_;
    // base(r) = r - chi(r) on the transition band; its derivatives.
    static double base(double r);
    static double base_d1(double r);
    static double base_d2(double r);
};

}  // namespace forge
