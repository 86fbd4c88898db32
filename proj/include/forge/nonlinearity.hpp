#pragma once

#include <array>
#include <cstdint>

namespace forge {

// Focusing power nonlinearity f(u) = |u|^{p-1} u with antiderivative
// F(u) = |u|^{p+1}/(p+1), plus the amplitude-truncated family
// f_B(u) = f(u) chi(|u|/B) used to start the backward solver from finite data.
class Nonlinearity {
public:
    explicit Nonlinearity(double p);

    double p() const { return p_; }
    double pbar() const { return pbar_; }  // min(2, p)

    double f(double u) const;
    double F(double u) const;
    double fprime(double u) const;   // p |u|^{p-1}
    double fsecond(double u) const;  // p(p-1) |u|^{p-3} u; domain error at 0 for p<2

    // Truncated at amplitude B >= 1: agrees with f for |u| < B, vanishes
    // for |u| > 2B.
    double f_trunc(double u, double B) const;
    double F_trunc(double u, double B) const;
    double fprime_trunc(double u, double B) const;

    // Cancellation-safe Taylor remainders for V > 0, used by the energy
    // diagnostics where w can be ~1e-8 of V.
    //   f_rem1 = f(V+w) - f(V) - f'(V) w
    //   F_rem1 = F(V+w) - F(V) - f(V) w
    double f_rem1(double V, double w) const;
    double F_rem1(double V, double w) const;

private:
    double p_;
    double pbar_;
    bool p_is_int_;
    int ip_;

    double pow_abs(double u, double e) const;  // |u|^e
};

// Empirical constants sup(LHS/RHS) for the four Taylor inequalities,
// estimated by uniform sampling of (u, v).
struct TaylorBounds {
    double c_taylor0 = 0.0;  // F-expansion to second order
    double c_taylor1 = 0.0;  // (f-expansion to first order) * v
    double c_taylor10 = 0.0; // f' increment
    double c_taylor = 0.0;   // f-expansion to second order
    std::uint64_t trials = 0;
};

// u_range must sit inside (0, inf); samples are uniform over the ranges.
// Deterministic for a fixed seed, independent of the worker count.
TaylorBounds sample_taylor_bounds(const Nonlinearity& nl, std::uint64_t trials,
                                  std::array<double, 2> u_range,
                                  std::array<double, 2> v_range,
                                  std::uint64_t seed, int workers = 1);

}  // namespace forge
