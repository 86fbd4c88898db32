#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "forge/params.hpp"

namespace forge {

using Point = std::array<double, 4>;

// User-supplied space-like graph t = phi(x): phi(0) = 0, |grad phi| < 1.
struct Hypersurface {
    int dim = 1;
    std::function<double(const Point&)> phi;
    std::function<void(const Point&, Point&)> grad;

    static Hypersurface zero(int dim);
    static Hypersurface linear(int dim, double ell);
    // ell*x1 + a*|x|^2 * chi(|x|/bump_radius)
    static Hypersurface quadratic(int dim, double ell, double a,
                                  double bump_radius = 1.0);
    // 1-d table (columns x, phi, dphi), linearly interpolated.
    static Hypersurface tabulated(const std::string& csv_path);
};

// Householder rotation aligning grad phi(0) with e1 (dim >= 2).
Hypersurface rotate_to_e1(const Hypersurface& hs);

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The localized surface and the graph function psi it induces in the
// boosted frame.
class SurfaceBundle {
public:
    int dim() const { return dim_; }
    double ell() const { return ell_; }
    double r() const { return r_; }
    double lambda_bound() const { return lambda_bound_; }
    double support_radius() const { return R_support_; }
    bool flat() const { return flat_; }  // psi identically zero

    double phi_tilde(const Point& x) const;
    void grad_phi_tilde(const Point& x, Point& g) const;

    // Inverts y1 = (x1 - ell*phi_tilde(x1, ybar)) / sqrt(1-ell^2).
    double solve_X1(const Point& y, double tol = 1e-12) const;

    double psi(const Point& y) const;
    void grad_psi(const Point& y, Point& g) const;

    friend SurfaceBundle localize(const Hypersurface& hs, const ModelParams& mp,
                                  int verify_n, double r_floor);
    friend void build_psi(SurfaceBundle& b, int verify_n);

private:
    int dim_ = 1;
    double ell_ = 0.0;
    double r_ = 1.0;
    double lambda_bound_ = 0.0;
    double R_support_ = 0.0;
    bool flat_ = false;
    bool psi_built_ = false;
    Hypersurface hs_;
};

// Chooses the largest r in {2^-m} whose sampled gradient deviation meets the
// localization bound with a 10% margin; verify_n = 0 picks a dim-aware
// default sample density.
SurfaceBundle localize(const Hypersurface& hs, const ModelParams& mp,
                       int verify_n = 0, double r_floor = 1e-6);

// Completes the bundle: verifies the slope constraint on psi over a dense
// sample of the support box and confirms psi(0) = 0 and compact support.
void build_psi(SurfaceBundle& b, int verify_n = 0);

}  // namespace forge
