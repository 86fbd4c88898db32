#pragma once

#include <cstdint>

#include "forge/surface.hpp"

namespace forge {

struct SpaceTime {
    double s = 0.0;  // backward time (or t for the inverse image)
    Point y{0, 0, 0, 0};
};

// Boosted graph coordinates: straightens the localized surface into {s=0}.
class LorentzGraphMap {
public:
    LorentzGraphMap(const SurfaceBundle* bundle, double tau0);

    double tau0() const { return tau0_; }
    double ell() const { return bundle_->ell(); }
    const SurfaceBundle& bundle() const { return *bundle_; }

    SpaceTime forward(double t, const Point& x) const;  // -> (s, y)
    SpaceTime inverse(double s, const Point& y) const;  // -> (t, x)

private:
    const SurfaceBundle* bundle_;
    double tau0_;
    double sq_;  // sqrt(1 - ell^2)
};

// The influence region carved out below the surface, plus cone predicates.
class InfluenceRegion {
public:
    InfluenceRegion(const SurfaceBundle* bundle, double delta0);

    double tau0() const { return tau0_; }
    double eps0() const { return eps0_; }
    double delta0() const { return delta0_; }

    bool in_T(double t, const Point& x) const;
    // Backward cone from the blow-up point above x0 with opening sigma.
    bool in_K(double t, double tp, const Point& xp, const Point& x0,
              double sigma) const;
    // Truncated uniqueness cone {0 <= t < tau, |x-x0| < R - t}.
    bool in_E(double t, const Point& x, const Point& x0, double R,
              double tau) const;

private:
    const SurfaceBundle* bundle_;
    double delta0_, tau0_, eps0_;
};

struct ConeCheckResult {
    bool ok = true;
    double worst_margin = 1e300;  // min slack over all samples; >0 means inside
    double bad_t = 0.0, bad_sp = 0.0;
    Point bad_y{0, 0, 0, 0};
};

// Samples the straightened cone of opening sigma_prime and height
// s(t) = eta*(tau0 + phi_tilde(x0) - t) and verifies each sample pulls back
// into the backward cone of opening sigma.
ConeCheckResult cone_image_check(const LorentzGraphMap& map,
                                 const InfluenceRegion& region,
                                 const Point& x0, double sigma,
                                 double sigma_prime, double eta,
                                 int samples, std::uint64_t seed);

}  // namespace forge
