#include "forge/surface.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "forge/cutoff.hpp"
#include "forge/rootfind.hpp"

namespace forge {
namespace {

double norm2(const Point& x, int dim) {
    double a = 0.0;
    for (int i = 0; i < dim; ++i) a += x[i] * x[i];
    return std::sqrt(a);
}

int default_verify_n(int dim) {
    switch (dim) {
        case 1:
        case 2: return 256;
        case 3: return 48;
        default: return 16;
    }
}

// Iterate a tensor sample of [-extent, extent]^dim with n points per axis.
template <typename Fn>
void for_each_sample(int dim, double extent, int n, Fn&& fn) {
    std::array<int, 4> idx{0, 0, 0, 0};
    const std::size_t total = [&] {
        std::size_t t = 1;
        for (int a = 0; a < dim; ++a) t *= n;
        return t;
    }();
    Point x{0, 0, 0, 0};
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (int a = dim - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(rem % n);
            rem /= n;
        }
        for (int a = 0; a < dim; ++a)
            x[a] = -extent + 2.0 * extent * idx[a] / (n - 1);
        fn(x);
    }
}

}  // namespace

Hypersurface Hypersurface::zero(int dim) {
    Hypersurface h;
    h.dim = dim;
    h.phi = [](const Point&) { return 0.0; };
    h.grad = [](const Point&, Point& g) { g.fill(0.0); };
    return h;
}

Hypersurface Hypersurface::linear(int dim, double ell) {
    if (!(std::abs(ell) < 1.0))
        throw GeometryError("linear surface slope must satisfy |ell| < 1");
    Hypersurface h;
    h.dim = dim;
    h.phi = [ell](const Point& x) { return ell * x[0]; };
    h.grad = [ell](const Point&, Point& g) {
        g.fill(0.0);
        g[0] = ell;
    };
    return h;
}

Hypersurface Hypersurface::quadratic(int dim, double ell, double a,
                                     double bump_radius) {
    if (!(bump_radius > 0.0))
        throw GeometryError("quadratic surface needs a positive bump radius");
    Hypersurface h;
    h.dim = dim;
    h.phi = [dim, ell, a, bump_radius](const Point& x) {
        double r2 = 0.0;
        for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
        return ell * x[0] + a * r2 * chi(std::sqrt(r2) / bump_radius);
    };
    h.grad = [dim, ell, a, bump_radius](const Point& x, Point& g) {
        g.fill(0.0);
        double r2 = 0.0;
        for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
        const double r = std::sqrt(r2);
        const double c = chi(r / bump_radius);
        const double cd = r > 0.0 ? chi_d1(r / bump_radius) / bump_radius : 0.0;
        for (int i = 0; i < dim; ++i)
            g[i] = 2.0 * a * x[i] * c + (r > 0.0 ? a * r2 * cd * x[i] / r : 0.0);
        g[0] += ell;
    };
    return h;
}

Hypersurface Hypersurface::tabulated(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw GeometryError("cannot open surface table: " + csv_path);
    std::vector<double> xs, ps, ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double x, p, d;
        char c1, c2;
        if (!(row >> x >> c1 >> p >> c2 >> d)) continue;  // header line
        if (!xs.empty() && x <= xs.back())
            throw GeometryError("surface table x-column must be ascending");
        xs.push_back(x);
        ps.push_back(p);
        ds.push_back(d);
    }
    if (xs.size() < 2)
        throw GeometryError("surface table needs at least two rows");

    auto lookup = [xs](double x) {
        std::size_t lo = 0, hi = xs.size() - 1;
        if (x <= xs.front()) return std::size_t{0};
        if (x >= xs.back()) return xs.size() - 2;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (xs[mid] <= x ? lo : hi) = mid;
        }
        return lo;
    };
    Hypersurface h;
    h.dim = 1;
    h.phi = [xs, ps, ds, lookup](const Point& xp) {
        const double x = xp[0];
        const std::size_t i = lookup(x);
        if (x < xs.front()) return ps.front() + ds.front() * (x - xs.front());
        if (x > xs.back()) return ps.back() + ds.back() * (x - xs.back());
        const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return (1.0 - t) * ps[i] + t * ps[i + 1];
    };
    h.grad = [xs, ds, lookup](const Point& xp, Point& g) {
        g.fill(0.0);
        const double x = xp[0];
        if (x < xs.front()) {
            g[0] = ds.front();
            return;
        }
        if (x > xs.back()) {
            g[0] = ds.back();
            return;
        }
        const std::size_t i = lookup(x);
        const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        g[0] = (1.0 - t) * ds[i] + t * ds[i + 1];
    };
    return h;
}

Hypersurface rotate_to_e1(const Hypersurface& hs) {
    Point g0;
    hs.grad(Point{0, 0, 0, 0}, g0);
    const int dim = hs.dim;
    const double ell = norm2(g0, dim);
    if (ell < 1e-14) return hs;

    // Householder reflection H swapping the unit gradient direction and e1;
    // H is symmetric and involutive, so the same matrix maps both ways.
    Point v;
    for (int i = 0; i < dim; ++i) v[i] = g0[i] / ell;
    v[0] -= 1.0;
    double vv = 0.0;
    for (int i = 0; i < dim; ++i) vv += v[i] * v[i];
    if (vv < 1e-28) return hs;  // already aligned

    auto reflect = [v, vv, dim](const Point& x) {
        double vx = 0.0;
        for (int i = 0; i < dim; ++i) vx += v[i] * x[i];
        Point out{0, 0, 0, 0};
        for (int i = 0; i < dim; ++i) out[i] = x[i] - 2.0 * vx / vv * v[i];
        return out;
    };

    Hypersurface out;
    out.dim = dim;
    out.phi = [reflect, inner = hs.phi](const Point& x) { return inner(reflect(x)); };
    out.grad = [reflect, inner = hs.grad, dim](const Point& x, Point& g) {
        Point gi;
        inner(reflect(x), gi);
        g = reflect(gi);
        for (int i = dim; i < 4; ++i) g[i] = 0.0;
    };
    return out;
}

double SurfaceBundle::phi_tilde(const Point& x) const {
    const double x1 = x[0];
    const double a = norm2(x, dim_);
    if (a >= 2.0 * r_) return ell_ * x1;
    return (hs_.phi(x) - ell_ * x1) * chi(a / r_) + ell_ * x1;
}

void SurfaceBundle::grad_phi_tilde(const Point& x, Point& g) const {
    const double a = norm2(x, dim_);
    if (a >= 2.0 * r_) {
        g.fill(0.0);
        g[0] = ell_;
        return;
    }
    Point gphi;
    hs_.grad(x, gphi);
    const double c = chi(a / r_);
    const double cd = a > 0.0 ? chi_d1(a / r_) / r_ : 0.0;
    const double bracket = hs_.phi(x) - ell_ * x[0];
    g.fill(0.0);
    for (int i = 0; i < dim_; ++i) {
        const double e1 = (i == 0) ? ell_ : 0.0;
        g[i] = c * (gphi[i] - e1) + (a > 0.0 ? bracket * cd * x[i] / a : 0.0) + e1;
    }
}

double SurfaceBundle::solve_X1(const Point& y, double tol) const {
    if (ell_ == 0.0) return y[0];
    const double sq = std::sqrt(1.0 - ell_ * ell_);
    const double alpha = std::sqrt((1.0 - ell_) / (1.0 + ell_));
    const double beta = std::sqrt((1.0 + ell_) / (1.0 - ell_));
    Point x{0, 0, 0, 0};
    for (int i = 1; i < dim_; ++i) x[i] = y[i];
    auto Phi = [&](double x1) {
        x[0] = x1;
        return (x1 - ell_ * phi_tilde(x)) / sq;
    };
    // Slope bounds give a guaranteed bracket around the linear-branch guess.
    const double guess = sq * y[0];
    const double res = y[0] - Phi(guess);
    double lo = guess, hi = guess;
    if (res >= 0.0)
        hi = guess + res / alpha + 1e-9;
    else
        lo = guess + res / alpha - 1e-9;
    auto fn = [&](double x1) { return Phi(x1) - y[0]; };
    return solve_bracketed(fn, lo, hi, tol / beta, 80);
}

double SurfaceBundle::psi(const Point& y) const {
    if (flat_) return 0.0;
    if (ell_ == 0.0) return phi_tilde(y);
    const double sq = std::sqrt(1.0 - ell_ * ell_);
    const double X1 = solve_X1(y);
    Point x = y;
    x[0] = X1;
    return (phi_tilde(x) - ell_ * X1) / sq;
}

void SurfaceBundle::grad_psi(const Point& y, Point& g) const {
    g.fill(0.0);
    if (flat_) return;
    Point x = y;
    x[0] = ell_ == 0.0 ? y[0] : solve_X1(y);
    Point gp;
    grad_phi_tilde(x, gp);
    const double d1 = (gp[0] - ell_) / (1.0 - ell_ * gp[0]);
    g[0] = d1;
    const double sq = std::sqrt(1.0 - ell_ * ell_);
    for (int j = 1; j < dim_; ++j) g[j] = gp[j] * (1.0 + ell_ * d1) / sq;
}

SurfaceBundle localize(const Hypersurface& hs, const ModelParams& mp,
                       int verify_n, double r_floor) {
    if (hs.dim != mp.dim)
        throw GeometryError("surface dimension does not match the model");
    const Point origin{0, 0, 0, 0};
    if (std::abs(hs.phi(origin)) > 1e-12)
        throw GeometryError("surface must pass through the origin");
    Point g0;
    hs.grad(origin, g0);
    for (int i = 1; i < hs.dim; ++i)
        if (std::abs(g0[i]) > 1e-10)
            throw GeometryError("gradient at the origin must align with the "
                                "first axis; rotate the surface first");
    const double ell = g0[0];
    if (!(std::abs(ell) < 1.0))
        throw GeometryError("surface is not space-like at the origin");
    if (ell < 0.0)
        throw GeometryError("orient the surface so the slope at the origin "
                            "is nonnegative (flip the first axis)");

    SurfaceBundle b;
    b.dim_ = hs.dim;
    b.ell_ = ell;
    b.hs_ = hs;
    b.lambda_bound_ = mp.lambda * (mp.p - 1.0) / (8.0 * (mp.p + 1.0));
    const double bound = (1.0 - ell) * std::min(b.lambda_bound_, 0.5);
    const int n = verify_n > 0 ? verify_n : default_verify_n(hs.dim);

    auto deviation = [&](double r) {
        b.r_ = r;
        double worst = 0.0;
        Point g;
        for_each_sample(hs.dim, 2.0 * r, n, [&](const Point& x) {
            b.grad_phi_tilde(x, g);
            g[0] -= ell;
            worst = std::max(worst, norm2(g, hs.dim));
        });
        return worst;
    };

    bool found = false;
    for (double r = 1.0; r >= r_floor; r *= 0.5) {
        const double dev = deviation(r);
        if (dev <= 0.9 * bound) {
            b.r_ = r;
            b.flat_ = dev == 0.0;
            found = true;
            break;
        }
    }
    if (!found)
        throw GeometryError("no localization radius down to the floor meets "
                            "the slope bound; the surface is too rough");

    const double stretch = std::sqrt((1.0 + ell) / (1.0 - ell));
    b.R_support_ = std::max(
        2.0, std::hypot(2.0 * b.r_ * stretch, 2.0 * b.r_) + 0.1);
    return b;
}

void build_psi(SurfaceBundle& b, int verify_n) {
    const int n = verify_n > 0 ? verify_n : default_verify_n(b.dim_);
    if (std::abs(b.psi(Point{0, 0, 0, 0})) > 1e-10)
        throw GeometryError("psi does not vanish at the origin");

    const double tol = b.lambda_bound_ * (1.0 + 1e-9) + 1e-12;
    double worst = 0.0;
    Point worst_y{0, 0, 0, 0};
    Point g;
    for_each_sample(b.dim_, b.R_support_, n, [&](const Point& y) {
        b.grad_psi(y, g);
        for (int i = 0; i < b.dim_; ++i) {
            if (std::abs(g[i]) > worst) {
                worst = std::abs(g[i]);
                worst_y = y;
            }
        }
    });
    if (worst > tol) {
        std::ostringstream msg;
        msg << "psi slope constraint violated: |grad psi| = " << worst
            << " > " << b.lambda_bound_ << " at y = (";
        for (int i = 0; i < b.dim_; ++i) msg << (i ? "," : "") << worst_y[i];
        msg << ")";
        throw GeometryError(msg.str());
    }

    // Compact support: psi vanishes on a shell beyond the reported radius.
    for (double scale : {1.02, 1.5, 4.0}) {
        Point y{0, 0, 0, 0};
        y[0] = b.R_support_ * scale;
        if (std::abs(b.psi(y)) > 1e-11)
            throw GeometryError("psi fails to vanish beyond its support radius");
        y[0] = -b.R_support_ * scale;
        if (std::abs(b.psi(y)) > 1e-11)
            throw GeometryError("psi fails to vanish beyond its support radius");
    }
    b.psi_built_ = true;
}

}  // namespace forge
