#include "forge/pullback.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace forge {

namespace {

// Multilinear interpolation of a nodal field at a point already known to
// lie inside the grid box (clamped against roundoff at the faces).
double interp_field(const SpatialGrid& g, const Field& f, const Point& y) {
    const auto str = g.strides();
    std::array<int, 4> base{0, 0, 0, 0};
    std::array<double, 4> frac{0, 0, 0, 0};
    for (int d = 0; d < g.dim; ++d) {
        double u = (y[d] - g.x0[d]) / g.h;
        u = std::clamp(u, 0.0, static_cast<double>(g.n[d] - 1));
        int c = static_cast<int>(std::floor(u));
        c = std::min(c, g.n[d] - 2);
        base[d] = c;
        frac[d] = u - c;
    }
    const int corners = 1 << g.dim;
    double acc = 0.0;
    for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        std::size_t flat = 0;
        for (int d = 0; d < g.dim; ++d) {
            const int bit = (m >> d) & 1;
            w *= bit ? frac[d] : 1.0 - frac[d];
            flat += static_cast<std::size_t>(base[d] + bit) * str[d];
        }
        acc += w * f[flat];
    }
    return acc;
}

bool inside_box(const SpatialGrid& g, const Point& y) {
    for (int d = 0; d < g.dim; ++d) {
        const double u = (y[d] - g.x0[d]) / g.h;
        const double tol = 1e-9;
        if (u < -tol || u > g.n[d] - 1 + tol) return false;
    }
    return true;
}

double radius(const Point& x, int dim) {
    double r2 = 0.0;
    for (int d = 0; d < dim; ++d) r2 += x[d] * x[d];
    return std::sqrt(r2);
}

// Integral of the piecewise-linear interpolant of q over [a, b] on a 1D grid.
// Nodes touched by the interval must be unmasked.
double clipped_line_integral(const SpatialGrid& g, const Field& q,
                             const std::vector<unsigned char>& mask, double a,
                             double b) {
    const double lo_edge = g.x0[0];
    const double hi_edge = g.x0[0] + g.h * (g.n[0] - 1);
    if (a < lo_edge - 1e-12 || b > hi_edge + 1e-12)
        throw std::domain_error("concentration ball exits the sampled grid");
    a = std::max(a, lo_edge);
    b = std::min(b, hi_edge);
    if (b <= a) return 0.0;
    const int i0 = std::clamp(
        static_cast<int>(std::floor((a - g.x0[0]) / g.h)), 0, g.n[0] - 2);
    double acc = 0.0;
    for (int i = i0; i < g.n[0] - 1; ++i) {
        const double xl = g.coord(0, i);
        const double xr = g.coord(0, i + 1);
        if (xl >= b) break;
        const double lo = std::max(a, xl);
        const double hi = std::min(b, xr);
        if (hi <= lo) continue;
        if (!mask[i] || !mask[i + 1])
            throw std::domain_error(
                "concentration ball crosses uncovered samples");
        const double tl = (lo - xl) / g.h;
        const double th = (hi - xl) / g.h;
        const double ql = q[i] + tl * (q[i + 1] - q[i]);
        const double qh = q[i] + th * (q[i + 1] - q[i]);
        acc += 0.5 * (ql + qh) * (hi - lo);
    }
    return acc;
}

// Indicator-weight trapezoid over the ball |x - x0| < r for dim >= 2.
double ball_integral_nd(const SpatialGrid& g, const Field& q,
                        const std::vector<unsigned char>& mask,
                        const Point& x0, double r) {
    for (int d = 0; d < g.dim; ++d) {
        if (x0[d] - r < g.x0[d] - 1e-12 ||
            x0[d] + r > g.x0[d] + g.h * (g.n[d] - 1) + 1e-12)
            throw std::domain_error(
                "concentration ball exits the sampled grid");
    }
    double cell = 1.0;
    for (int d = 0; d < g.dim; ++d) cell *= g.h;
    double acc = 0.0;
    std::array<int, 4> idx{};
    for (std::size_t ix = 0; ix < g.size(); ++ix) {
        g.decode(ix, idx);
        const auto pt = g.point(ix);
        double r2 = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            const double del = pt[d] - x0[d];
            r2 += del * del;
        }
        if (r2 >= r * r) continue;
        if (!mask[ix])
            throw std::domain_error(
                "concentration ball crosses uncovered samples");
        acc += g.quad_weight(idx) * cell * q[ix];
    }
    return acc;
}

}  // namespace

std::size_t PullbackField::covered() const {
    std::size_t n = 0;
    for (const auto& m : mask)
        for (unsigned char c : m) n += c;
    return n;
}

PullbackField pullback(const Trajectory& traj, const LorentzGraphMap& map,
                       const std::vector<double>& t_samples,
                       const SpatialGrid& xg) {
    const auto& states = traj.states;
    if (states.size() < 2)
        throw std::invalid_argument(
            "pullback needs at least two trajectory states");
    std::vector<double> sv(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) sv[i] = states[i].s;
    if (!std::is_sorted(sv.begin(), sv.end()))
        throw std::invalid_argument("trajectory states must ascend in s");
    if (t_samples.empty() || !std::is_sorted(t_samples.begin(), t_samples.end()))
        throw std::invalid_argument("sample times must be ascending");

    PullbackField pb;
    pb.t = t_samples;
    pb.xg = xg;
    pb.ell = map.ell();
    pb.tau0 = map.tau0();
    pb.bundle = &map.bundle();
    pb.s_lo = sv.front();
    pb.s_hi = sv.back();
    // Influence-region shape implied by tau0 and the boost.
    pb.delta0 =
        6.0 * pb.tau0 * std::sqrt((1.0 + pb.ell) / (1.0 - pb.ell));
    pb.eps0 = (1.0 - pb.ell) / (2.0 + pb.ell) * pb.tau0;

    const SpatialGrid& tg = traj.grid;  // grid the state fields live on
    if (tg.size() == 0 || states.front().v.size() != tg.size())
        throw std::invalid_argument("trajectory grid does not match its fields");

    const double sq = std::sqrt(1.0 - pb.ell * pb.ell);
    const bool boosted = pb.ell != 0.0;
    std::vector<Field> d1v;
    if (boosted) {
        d1v.resize(states.size());
        for (std::size_t i = 0; i < states.size(); ++i)
            gradient_axis(tg, states[i].v, 0, d1v[i]);
    }

    const double stol = 1e-9 * std::max(std::abs(pb.s_hi), 1.0);
    const std::size_t nx = xg.size();
    pb.u.assign(t_samples.size(), Field(nx, 0.0));
    pb.ut.assign(t_samples.size(), Field(nx, 0.0));
    pb.mask.assign(t_samples.size(), std::vector<unsigned char>(nx, 0));

    for (std::size_t k = 0; k < t_samples.size(); ++k) {
        const double t = t_samples[k];
        for (std::size_t ix = 0; ix < nx; ++ix) {
            Point x{};
            const auto pt = xg.point(ix);
            for (int d = 0; d < xg.dim; ++d) x[d] = pt[d];
            const SpaceTime im = map.forward(t, x);
            const bool in_window = im.s > 0.0 && im.s < pb.delta0;
            const bool in_region =
                t >= 0.0 && t < pb.tau0 + pb.bundle->phi_tilde(x) &&
                radius(x, xg.dim) < pb.tau0 + pb.eps0 - t;
            const bool covered =
                im.s >= pb.s_lo - stol && im.s <= pb.s_hi + stol;
            if (!(in_window && in_region && covered &&
                  inside_box(tg, im.y)))
                continue;
            const double s = std::clamp(im.s, pb.s_lo, pb.s_hi);
            const auto it = std::upper_bound(sv.begin(), sv.end(), s);
            const std::size_t j = std::min(
                states.size() - 2,
                static_cast<std::size_t>(
                    std::max<std::ptrdiff_t>(0, it - sv.begin() - 1)));
            const double w = (s - sv[j]) / (sv[j + 1] - sv[j]);
            const double va = interp_field(tg, states[j].v, im.y);
            const double vb = interp_field(tg, states[j + 1].v, im.y);
            const double dsa = interp_field(tg, states[j].vs, im.y);
            const double dsb = interp_field(tg, states[j + 1].vs, im.y);
            double val = (1.0 - w) * va + w * vb;
            double slope = (1.0 - w) * dsa + w * dsb;
            if (boosted) {
                const double ga = interp_field(tg, d1v[j], im.y);
                const double gb = interp_field(tg, d1v[j + 1], im.y);
                slope += pb.ell * ((1.0 - w) * ga + w * gb);
            }
            pb.u[k][ix] = val;
            pb.ut[k][ix] = -slope / sq;
            pb.mask[k][ix] = 1;
        }
    }
    return pb;
}

double concentration_core_radius(const PullbackField& pb) {
    return std::min(pb.eps0 / 4.0, 1.0);
}

std::vector<double> concentration(const PullbackField& pb, const Point& x0,
                                  double sigma,
                                  const std::vector<double>& t_list) {
    if (pb.t.size() < 2)
        throw std::invalid_argument("pullback field holds too few samples");
    if (sigma <= pb.ell || sigma > 1.0)
        throw std::invalid_argument(
            "opening must exceed the boost: sigma in (ell, 1]");
    const double eps = concentration_core_radius(pb);
    if (radius(x0, pb.xg.dim) >= eps)
        throw std::invalid_argument(
            "center outside the admissible core ball of radius " +
            std::to_string(eps));
    const double T0 = pb.tau0 + pb.bundle->phi_tilde(x0);

    // Inner ball integrals of u_t^2 at each sample time, lazily computed.
    std::vector<double> flux(pb.t.size(),
                             -1.0);  // -1 marks "not yet evaluated"
    auto inner = [&](std::size_t k) {
        if (flux[k] >= 0.0) return flux[k];
        const double r = sigma * (T0 - pb.t[k]);
        double val = 0.0;
        if (r > 0.0) {
            Field q(pb.xg.size());
            for (std::size_t ix = 0; ix < q.size(); ++ix)
                q[ix] = pb.ut[k][ix] * pb.ut[k][ix];
            val = (pb.xg.dim == 1)
                      ? clipped_line_integral(pb.xg, q, pb.mask[k],
                                              x0[0] - r, x0[0] + r)
                      : ball_integral_nd(pb.xg, q, pb.mask[k], x0, r);
        }
        flux[k] = val;
        return val;
    };

    std::vector<double> out;
    out.reserve(t_list.size());
    for (double t : t_list) {
        if (t >= T0)
            throw std::invalid_argument(
                "evaluation time must precede the blow-up time");
        // Trapezoid over the field's samples inside [t, T0].
        const double ttol = 1e-12 * std::max(std::abs(T0), 1.0);
        std::size_t k0 = 0;
        while (k0 < pb.t.size() && pb.t[k0] < t - ttol) ++k0;
        std::size_t k1 = pb.t.size();
        while (k1 > k0 && pb.t[k1 - 1] > T0 + ttol) --k1;
        if (k1 - k0 < 2)
            throw std::invalid_argument(
                "t window holds fewer than two field samples");
        double acc = 0.0;
        for (std::size_t k = k0; k + 1 < k1; ++k)
            acc += 0.5 * (inner(k) + inner(k + 1)) * (pb.t[k + 1] - pb.t[k]);
        out.push_back(acc / (T0 - t));
    }
    return out;
}

}  // namespace forge
