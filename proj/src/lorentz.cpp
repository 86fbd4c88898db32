#include "forge/lorentz.hpp"

#include <cmath>

#include "forge/rng.hpp"

namespace forge {

LorentzGraphMap::LorentzGraphMap(const SurfaceBundle* bundle, double tau0)
    : bundle_(bundle), tau0_(tau0) {
    const double ell = bundle->ell();
    sq_ = std::sqrt(1.0 - ell * ell);
}

SpaceTime LorentzGraphMap::forward(double t, const Point& x) const {
    const double ell = bundle_->ell();
    SpaceTime out;
    out.y = x;
    out.y[0] = (x[0] - ell * (t - tau0_)) / sq_;
    out.s = bundle_->psi(out.y) - (t - tau0_ - ell * x[0]) / sq_;
    return out;
}

SpaceTime LorentzGraphMap::inverse(double s, const Point& y) const {
    const double ell = bundle_->ell();
    const double psi = bundle_->psi(y);
    SpaceTime out;
    out.y = y;
    out.y[0] = (y[0] + ell * (psi - s)) / sq_;
    out.s = tau0_ + ell * out.y[0] + sq_ * (psi - s);
    return out;
}

InfluenceRegion::InfluenceRegion(const SurfaceBundle* bundle, double delta0)
    : bundle_(bundle), delta0_(delta0) {
    const double ell = bundle->ell();
    tau0_ = std::sqrt((1.0 - ell) / (1.0 + ell)) * delta0 / 6.0;
    eps0_ = (1.0 - ell) / (2.0 + ell) * tau0_;
}

bool InfluenceRegion::in_T(double t, const Point& x) const {
    if (t < 0.0) return false;
    if (t >= tau0_ + bundle_->phi_tilde(x)) return false;
    double r2 = 0.0;
    for (int i = 0; i < bundle_->dim(); ++i) r2 += x[i] * x[i];
    return std::sqrt(r2) < tau0_ + eps0_ - t;
}

bool InfluenceRegion::in_K(double t, double tp, const Point& xp,
                           const Point& x0, double sigma) const {
    const double top = tau0_ + bundle_->phi_tilde(x0);
    if (!(tp > t) || !(tp < top)) return false;
    double r2 = 0.0;
    for (int i = 0; i < bundle_->dim(); ++i) {
        const double d = xp[i] - x0[i];
        r2 += d * d;
    }
    return std::sqrt(r2) < sigma * (top - tp);
}

bool InfluenceRegion::in_E(double t, const Point& x, const Point& x0, double R,
                           double tau) const {
    if (t < 0.0 || t >= tau) return false;
    double r2 = 0.0;
    for (int i = 0; i < bundle_->dim(); ++i) {
        const double d = x[i] - x0[i];
        r2 += d * d;
    }
    return std::sqrt(r2) < R - t;
}

ConeCheckResult cone_image_check(const LorentzGraphMap& map,
                                 const InfluenceRegion& region,
                                 const Point& x0, double sigma,
                                 double sigma_prime, double eta, int samples,
                                 std::uint64_t seed) {
    const int dim = map.bundle().dim();
    const double top = region.tau0() + map.bundle().phi_tilde(x0);
    // Base point of the straightened cone: the blow-up point's y-image.
    Point y0 = x0;
    y0[0] = (x0[0] - map.ell() * map.bundle().phi_tilde(x0)) /
            std::sqrt(1.0 - map.ell() * map.ell());

    Rng rng(seed);
    ConeCheckResult res;
    for (int i = 0; i < samples; ++i) {
        const double t = rng.uniform(0.0, top * (1.0 - 1e-9));
        const double st = eta * (top - t);
        const double sp = rng.uniform(1e-12, st * (1.0 - 1e-12));
        Point y = y0;
        // uniform direction in the ball of radius sigma_prime * s'.
        double dir2 = 0.0;
        Point dir{0, 0, 0, 0};
        do {
            dir2 = 0.0;
            for (int a = 0; a < dim; ++a) {
                dir[a] = rng.uniform(-1.0, 1.0);
                dir2 += dir[a] * dir[a];
            }
        } while (dir2 > 1.0 || dir2 == 0.0);
        for (int a = 0; a < dim; ++a) y[a] += sigma_prime * sp * dir[a];

        const auto tx = map.inverse(sp, y);
        // membership margins: all three must stay positive
        const double mtop = top - tx.s;       // t' below the vertex time
        const double mbot = tx.s - t;         // t' above the cone base
        double r2 = 0.0;
        for (int a = 0; a < dim; ++a) {
            const double d = tx.y[a] - x0[a];
            r2 += d * d;
        }
        const double mrad = sigma * (top - tx.s) - std::sqrt(r2);
        const double margin = std::min({mtop, mbot, mrad});
        if (margin < res.worst_margin) {
            res.worst_margin = margin;
            res.bad_t = t;
            res.bad_sp = sp;
            res.bad_y = y;
        }
        if (margin <= 0.0) res.ok = false;
    }
    return res;
}

}  // namespace forge
