#pragma once

#include <vector>

#include "forge/grid.hpp"
#include "forge/lorentz.hpp"
#include "forge/solver.hpp"

namespace forge {

// Trajectory composed with the graph map, sampled on a (t, x) lattice.
// A node is unmasked only when it lies in the influence region, its image
// lands in the covered backward-time window, and the spatial image stays
// on the grid; everything else is zeroed, never extrapolated.
struct PullbackField {
    std::vector<double> t;  // ascending sample times
    SpatialGrid xg;
    std::vector<Field> u;                          // one field per sample time
    std::vector<Field> ut;                         // chain-rule time derivative
    std::vector<std::vector<unsigned char>> mask;  // 1 = covered
    double ell = 0.0;
    double tau0 = 0.0;
    double delta0 = 0.0;  // horizon of the influence region
    double eps0 = 0.0;    // lateral margin of the influence region
    double s_lo = 0.0, s_hi = 0.0;  // backward-time coverage of the trajectory
    const SurfaceBundle* bundle = nullptr;
    int interp_order = 1;  // multilinear in (s, x)

    std::size_t covered() const;  // unmasked node count over all samples
};

// u(t,x) = v at the straightened image of (t,x), multilinear in (s, x);
// d_t u = -(1-ell^2)^{-1/2} [d_s v + ell d_{y1} v] at the image.
PullbackField pullback(const Trajectory& traj, const LorentzGraphMap& map,
                       const std::vector<double>& t_samples,
                       const SpatialGrid& xg);

// Largest |x0| the concentration functional accepts: min(eps0/4, 1).
double concentration_core_radius(const PullbackField& pb);

// Time-averaged flux of u_t through balls shrinking onto the blow-up point:
//   I(t) = (T0-t)^{-1} int_t^{T0} dt' int_{|x-x0| < sigma (T0-t')} u_t^2 dx
// with T0 = tau0 + phi_tilde(x0).  Trapezoid in t' over the field's own
// samples (truncated to the covered window); the ball integral clips cells
// exactly on a line and falls back to indicator weights in dimension >= 2.
std::vector<double> concentration(const PullbackField& pb, const Point& x0,
                                  double sigma,
                                  const std::vector<double>& t_list);

}  // namespace forge
