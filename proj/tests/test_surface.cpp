#include <doctest.h>

#include <cmath>

#include "forge/params.hpp"
#include "forge/rng.hpp"
#include "forge/surface.hpp"

using namespace forge;

namespace {
const ModelParams kP13 = derive_params(1, 3.0);
}

TEST_CASE("flat and linear surfaces localize trivially") {
    auto bz = localize(Hypersurface::zero(1), kP13);
    CHECK(bz.ell() == 0.0);
    CHECK(bz.r() == 1.0);
    CHECK(bz.flat());
    CHECK(bz.phi_tilde(Point{0.7, 0, 0, 0}) == 0.0);

    auto bl = localize(Hypersurface::linear(1, 0.3), kP13);
    CHECK(bl.ell() == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(bl.flat());
    for (double x : {-1.5, 0.2, 3.0})
        CHECK(bl.phi_tilde(Point{x, 0, 0, 0}) == doctest::Approx(0.3 * x).epsilon(1e-15));
}

TEST_CASE("localization radius search on the worked quadratic") {
    Hypersurface hs;
    hs.dim = 1;
    hs.phi = [](const Point& x) { return 0.3 * x[0] + x[0] * x[0]; };
    hs.grad = [](const Point& x, Point& g) {
        g.fill(0.0);
        g[0] = 0.3 + 2.0 * x[0];
    };
    auto b = localize(hs, kP13);
    // deviation bound (1-0.3)*min{(1/3)(3-1)/(8*(3+1)), 1/2} = 0.7/48
    CHECK(b.lambda_bound() == doctest::Approx(1.0 / 48.0).epsilon(1e-14));
    // frozen output of the documented geometric search
    CHECK(b.r() == 0.001953125);  // 2^-9
    CHECK(!b.flat());
    // localized surface reverts to the linear branch away from the origin
    CHECK(b.phi_tilde(Point{0.5, 0, 0, 0}) == doctest::Approx(0.15).epsilon(1e-15));
    // and matches phi inside the kept ball
    const double xi = 0.0005;
    CHECK(b.phi_tilde(Point{xi, 0, 0, 0}) ==
          doctest::Approx(0.3 * xi + xi * xi).epsilon(1e-15));
}

TEST_CASE("rough surface aborts the search") {
    Hypersurface hs;
    hs.dim = 1;
    // gradient deviation does not shrink with |x| -> no admissible radius
    hs.phi = [](const Point& x) { return 0.5 * x[0]; };
    hs.grad = [](const Point&, Point& g) {
        g.fill(0.0);
        g[0] = 0.5 + 0.3;  // inconsistent on purpose: constant deviation 0.3
    };
    CHECK_THROWS_AS(localize(hs, kP13, 0, 1e-3), GeometryError);
}

TEST_CASE("implicit first coordinate: closed forms and round-trip") {
    // ell = 0: identity
    auto b0 = localize(Hypersurface::quadratic(1, 0.0, 0.1), kP13);
    CHECK(b0.solve_X1(Point{0.37, 0, 0, 0}) == 0.37);

    // pure linear branch: X1 = y1 / sqrt(1-ell^2)
    auto bl = localize(Hypersurface::linear(1, 0.6), kP13);
    CHECK(bl.solve_X1(Point{0.8, 0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));

    // round-trip through the defining relation on a curved bundle
    auto bq = localize(Hypersurface::quadratic(1, 0.3, 0.1), kP13);
    const double sq = std::sqrt(1.0 - 0.09);
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        const double x1 = rng.uniform(-2.0, 2.0);
        Point x{x1, 0, 0, 0};
        const double y1 = (x1 - 0.3 * bq.phi_tilde(x)) / sq;
        CHECK(bq.solve_X1(Point{y1, 0, 0, 0}) == doctest::Approx(x1).epsilon(1e-10));
    }
}

TEST_CASE("difference quotients of X1 stay inside the slope bounds") {
    auto bq = localize(Hypersurface::quadratic(1, 0.3, 0.1), kP13);
    const double alpha = std::sqrt(0.7 / 1.3), beta = std::sqrt(1.3 / 0.7);
    const double h = 1e-3;
    for (double y1 = -1.0; y1 <= 1.0; y1 += 0.05) {
        const double a = bq.solve_X1(Point{y1, 0, 0, 0});
        const double b = bq.solve_X1(Point{y1 + h, 0, 0, 0});
        const double q = (b - a) / h;
        CHECK(q >= alpha - 1e-6);
        CHECK(q <= beta + 1e-6);
    }
}

TEST_CASE("psi reduces to the localized surface when there is no boost") {
    auto b = localize(Hypersurface::quadratic(1, 0.0, 0.1), kP13);
    build_psi(b);
    for (double y = -2.0; y <= 2.0; y += 0.1)
        CHECK(b.psi(Point{y, 0, 0, 0}) ==
              doctest::Approx(b.phi_tilde(Point{y, 0, 0, 0})).epsilon(1e-14));
}

TEST_CASE("boosted psi: defining relation round-trip and slope constraint") {
    auto b = localize(Hypersurface::quadratic(1, 0.3, 0.1), kP13);
    build_psi(b);  // also verifies the slope constraint internally
    CHECK(b.psi(Point{0, 0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-12));

    const double sq = std::sqrt(1.0 - 0.09);
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const double x1 = rng.uniform(-1.5, 1.5);
        Point x{x1, 0, 0, 0};
        const double pt = b.phi_tilde(x);
        const double recon = sq * b.psi(Point{(x1 - 0.3 * pt) / sq, 0, 0, 0}) + 0.3 * x1;
        CHECK(recon == doctest::Approx(pt).epsilon(1e-9));
    }

    // gradient identity vs direct differencing of psi
    for (double y1 : {-0.8, -0.2, 0.05, 0.4, 1.1}) {
        Point g;
        b.grad_psi(Point{y1, 0, 0, 0}, g);
        const double h = 1e-5;
        const double fd = (b.psi(Point{y1 + h, 0, 0, 0}) -
                           b.psi(Point{y1 - h, 0, 0, 0})) / (2 * h);
        CHECK(g[0] == doctest::Approx(fd).epsilon(1e-5));
        CHECK(std::abs(g[0]) <= b.lambda_bound() * (1 + 1e-9) + 1e-12);
    }

    // compact support
    CHECK(b.psi(Point{b.support_radius() * 1.1, 0, 0, 0}) == 0.0);
}

TEST_CASE("rotation helper aligns the gradient with the first axis") {
    // dim 2 surface with a skewed slope at the origin
    Hypersurface hs;
    hs.dim = 2;
    hs.phi = [](const Point& x) { return 0.2 * x[0] + 0.15 * x[1]; };
    hs.grad = [](const Point&, Point& g) {
        g.fill(0.0);
        g[0] = 0.2;
        g[1] = 0.15;
    };
    CHECK_THROWS_AS(localize(hs, derive_params(2, 3.0), 32), GeometryError);
    auto rot = rotate_to_e1(hs);
    Point g0;
    rot.grad(Point{0, 0, 0, 0}, g0);
    CHECK(g0[0] == doctest::Approx(std::hypot(0.2, 0.15)).epsilon(1e-14));
    CHECK(g0[1] == doctest::Approx(0.0).epsilon(1e-14));
    auto b = localize(rot, derive_params(2, 3.0), 32);
    CHECK(b.ell() == doctest::Approx(0.25).epsilon(1e-13));

    // dim 1 negative slope flips
    Hypersurface neg = Hypersurface::linear(1, -0.4);
    auto flipped = rotate_to_e1(neg);
    flipped.grad(Point{0, 0, 0, 0}, g0);
    CHECK(g0[0] == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("precondition failures are reported") {
    Hypersurface off;
    off.dim = 1;
    off.phi = [](const Point&) { return 0.5; };
    off.grad = [](const Point&, Point& g) { g.fill(0.0); };
    CHECK_THROWS_AS(localize(off, kP13), GeometryError);  // phi(0) != 0

    CHECK_THROWS_AS(localize(Hypersurface::zero(2), kP13), GeometryError);  // dim mismatch
    CHECK_THROWS(Hypersurface::linear(1, 1.0));  // not space-like
}
