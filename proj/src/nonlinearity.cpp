#include "forge/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "forge/cutoff.hpp"

namespace forge {

Nonlinearity::Nonlinearity(double p) : p_(p), pbar_(std::min(2.0, p)) {
    if (!(p > 1.0)) throw std::invalid_argument("nonlinearity power must exceed 1");
    ip_ = static_cast<int>(std::lround(p));
    p_is_int_ = std::abs(p - ip_) < 1e-14 && ip_ <= 9;
}

double Nonlinearity::pow_abs(double u, double e) const {
    return std::pow(std::abs(u), e);
}

double Nonlinearity::f(double u) const {
    if (p_is_int_) {
        // |u|^{p-1} u = u^p for odd p, |u| u^{p-1} for even p.
        double r = u;
        for (int i = 1; i < ip_; ++i) r *= u;
        return (ip_ % 2 == 0 && u < 0.0) ? -r : r;
    }
    return pow_abs(u, p_ - 1.0) * u;
}

double Nonlinearity::F(double u) const {
    return pow_abs(u, p_ + 1.0) / (p_ + 1.0);
}

double Nonlinearity::fprime(double u) const { return p_ * pow_abs(u, p_ - 1.0); }

double Nonlinearity::fsecond(double u) const {
    if (u == 0.0) {
        if (p_ < 2.0)
            throw std::domain_error("second derivative of the nonlinearity is "
                                    "singular at 0 for p < 2");
        return 0.0;  // limit value (and the odd-symmetry value at p = 2)
    }
    return p_ * (p_ - 1.0) * pow_abs(u, p_ - 3.0) * u;
}

double Nonlinearity::f_trunc(double u, double B) const {
    const double a = std::abs(u);
    if (a <= B) return f(u);
    if (a >= 2.0 * B) return 0.0;
    return f(u) * chi(a / B);
}

double Nonlinearity::F_trunc(double u, double B) const {
    const double a = std::abs(u);
    if (a <= B) return F(u);
    // F_trunc is even; integrate the cut tail with fixed Gauss-Legendre.
    static constexpr int NG = 24;
    static const std::array<double, NG> gx = [] {
        // Nodes of the Legendre polynomial on (-1,1) via Newton from the
        // Chebyshev initial guess; computed once.
        std::array<double, NG> x{};
        for (int i = 0; i < NG; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (NG + 0.5));
            for (int it = 0; it < 100; ++it) {
                double pm1 = 1.0, pc = t;
                for (int j = 2; j <= NG; ++j) {
                    double pn = ((2 * j - 1) * t * pc - (j - 1) * pm1) / j;
                    pm1 = pc;
                    pc = pn;
                }
                double dp = NG * (t * pc - pm1) / (t * t - 1.0);
                double dt = pc / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            x[i] = t;
        }
        return x;
    }();
    static const std::array<double, NG> gw = [] {
        std::array<double, NG> w{};
        for (int i = 0; i < NG; ++i) {
            double t = gx[i];
            double pm1 = 1.0, pc = t;
            for (int j = 2; j <= NG; ++j) {
                double pn = ((2 * j - 1) * t * pc - (j - 1) * pm1) / j;
                pm1 = pc;
                pc = pn;
            }
            double dp = NG * (t * pc - pm1) / (t * t - 1.0);
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        return w;
    }();

    const double hi = std::min(a, 2.0 * B);
    double tail = 0.0;
    const double mid = 0.5 * (B + hi), half = 0.5 * (hi - B);
    for (int i = 0; i < NG; ++i) {
        const double t = mid + half * gx[i];
        tail += gw[i] * std::pow(t, p_) * chi(t / B);
    }
    return F(B) + half * tail;
}

double Nonlinearity::fprime_trunc(double u, double B) const {
    const double a = std::abs(u);
    if (a <= B) return fprime(u);
    if (a >= 2.0 * B) return 0.0;
    const double sgn = u >= 0.0 ? 1.0 : -1.0;
    return fprime(u) * chi(a / B) + f(u) * chi_d1(a / B) * sgn / B;
}

double Nonlinearity::f_rem1(double V, double w) const {
    const double d = w / V;
    if (!(V > 0.0) || d <= -0.5 || d >= 0.5)
        return f(V + w) - f(V) - fprime(V) * w;
    // f(V(1+d)) = V^p (1+d)^p for 1+d > 0; expm1 keeps the small remainder.
    const double t = std::expm1(p_ * std::log1p(d));
    return std::pow(V, p_) * (t - p_ * d);
}

double Nonlinearity::F_rem1(double V, double w) const {
    const double d = w / V;
    if (!(V > 0.0) || d <= -0.5 || d >= 0.5)
        return F(V + w) - F(V) - f(V) * w;
    const double t = std::expm1((p_ + 1.0) * std::log1p(d));
    return std::pow(V, p_ + 1.0) * (t - (p_ + 1.0) * d) / (p_ + 1.0);
}

namespace {

struct RatioAcc {
    double c0 = 0.0, c1 = 0.0, c10 = 0.0, ct = 0.0;
    void merge(const RatioAcc& o) {
        c0 = std::max(c0, o.c0);
        c1 = std::max(c1, o.c1);
        c10 = std::max(c10, o.c10);
        ct = std::max(ct, o.ct);
    }
};

RatioAcc sample_chunk(const Nonlinearity& nl, std::uint64_t trials,
                      std::array<double, 2> ur, std::array<double, 2> vr,
                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto unif = [&rng](double lo, double hi) {
        // 53-bit mantissa from the top bits; avoids distribution objects so
        // the stream is identical across standard libraries.
        const double t = (rng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * t;
    };
    const double p = nl.p(), pb = nl.pbar();
    RatioAcc acc;
    for (std::uint64_t i = 0; i < trials; ++i) {
        const double u = unif(ur[0], ur[1]);
        const double v = unif(vr[0], vr[1]);
        const double av = std::abs(v);
        if (av == 0.0) continue;

        const double r0 = std::pow(av, p + 1.0) + std::pow(u, p - pb) * std::pow(av, pb + 1.0);
        const double rt = std::pow(av, p + 1.0) / u + std::pow(u, p - pb - 1.0) * std::pow(av, pb + 1.0);
        const double r10 = std::pow(av, p) / u + std::pow(u, p - 2.0) * av;

        const double l0 = std::abs(nl.F(u + v) - nl.F(u) - nl.f(u) * v -
                                   0.5 * nl.fprime(u) * v * v);
        const double l1 = std::abs((nl.f(u + v) - nl.f(u) - nl.fprime(u) * v) * v);
        const double l10 = std::abs(nl.fprime(u + v) - nl.fprime(u));
        const double lt = std::abs(nl.f(u + v) - nl.f(u) - nl.fprime(u) * v -
                                   0.5 * nl.fsecond(u) * v * v);

        acc.c0 = std::max(acc.c0, l0 / r0);
        acc.c1 = std::max(acc.c1, l1 / r0);
        acc.c10 = std::max(acc.c10, l10 / r10);
        acc.ct = std::max(acc.ct, lt / rt);
    }
    return acc;
}

}  // namespace

TaylorBounds sample_taylor_bounds(const Nonlinearity& nl, std::uint64_t trials,
                                  std::array<double, 2> u_range,
                                  std::array<double, 2> v_range,
                                  std::uint64_t seed, int workers) {
    if (!(u_range[0] > 0.0))
        throw std::invalid_argument("taylor sampling requires u > 0");
    if (trials < 1000)
        throw std::invalid_argument("taylor sampling requires at least 1e3 trials");

    // Fixed chunking so the result does not depend on the worker count.
    const std::uint64_t kChunk = 1 << 14;
    const std::uint64_t nchunks = (trials + kChunk - 1) / kChunk;
    std::vector<RatioAcc> partial(nchunks);

    auto run = [&](std::uint64_t c0, std::uint64_t c1) {
        for (std::uint64_t c = c0; c < c1; ++c) {
            const std::uint64_t n =
                std::min(kChunk, trials - c * kChunk);
            partial[c] = sample_chunk(nl, n, u_range, v_range, seed + c + 1);
        }
    };

    const int nw = std::max(1, std::min<int>(workers, static_cast<int>(nchunks)));
    if (nw == 1) {
        run(0, nchunks);
    } else {
        std::vector<std::thread> pool;
        const std::uint64_t per = (nchunks + nw - 1) / nw;
        for (int t = 0; t < nw; ++t) {
            const std::uint64_t a = t * per, b = std::min(nchunks, a + per);
            if (a < b) pool.emplace_back(run, a, b);
        }
        for (auto& th : pool) th.join();
    }

    RatioAcc total;
    for (const auto& a : partial) total.merge(a);
    TaylorBounds tb;
    tb.c_taylor0 = total.c0;
    tb.c_taylor1 = total.c1;
    tb.c_taylor10 = total.c10;
    tb.c_taylor = total.ct;
    tb.trials = trials;
    return tb;
}

}  // namespace forge
