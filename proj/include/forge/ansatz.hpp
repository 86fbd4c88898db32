#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "forge/cutoff.hpp"
#include "forge/grid.hpp"
#include "forge/nonlinearity.hpp"
#include "forge/params.hpp"
#include "forge/surface.hpp"

namespace forge {

// Geometry coefficients sampled on a spatial grid: the graph function in the
// boosted frame, its gradient (identity-based), and one finite-difference
// level for the Laplacian and the profile amplitude derivatives.
struct GeoFields {
    bool flat = true;
    Field psi, g2, lappsi;            // |grad psi|^2 and Laplacian
    std::array<Field, 4> gpsi;
    Field kappa, lapkap;              // kappa(x) = kappa0 (1-|grad psi|^2)^{1/(p-1)}
    std::array<Field, 4> gkap;

    static GeoFields build(const SurfaceBundle& b, const SpatialGrid& g,
                           const ModelParams& mp);
};

struct StackConfig {
    double extent = 0.0;     // 0 -> 2*max(R_support, 2)
    int nx = 0;              // 0 -> dim-aware default
    double s_min = 1e-4;
    double s_max = 1.0;
    int s_per_decade = 64;
};

// One correction level: the field, its s-derivative, the residual after
// adding it, and the accepted cutoff radius / horizon pair.
struct LevelData {
    double r = 1.0;           // cutoff radius in bump units
    std::size_t s_top = 0;    // index of the horizon node s_j
    Field v, vs, E;           // s-major [ns * nx]; NaN above the valid span
    std::size_t valid_top = 0;  // v defined for s-index <= valid_top (= s_top of j-1)
};

class AnsatzError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The blow-up ansatz hierarchy on a space-time grid.
class AnsatzStack {
public:
    AnsatzStack(const ModelParams& mp, const SurfaceBundle* bundle,
                const StackConfig& cfg);

    const ModelParams& params() const { return par_; }
    const SurfaceBundle& bundle() const { return *bundle_; }
    const SpatialGrid& grid() const { return grid_; }
    const LogAxis& saxis() const { return sax_; }
    const GeoFields& geo() const { return geo_; }
    const BumpA& bump() const { return bump_; }
    const Nonlinearity& nonlinearity() const { return nl_; }

    // Closed-form profile evaluation at a grid node.
    double V0(std::size_t ix, double s) const;
    double dsV0(std::size_t ix, double s) const;
    double dssV0(std::size_t ix, double s) const;
    // Spatial derivatives (chain rule through the bump and the amplitude).
    double gradV0(std::size_t ix, double s, int axis) const;
    double lapV0(std::size_t ix, double s) const;
    double grad_dsV0(std::size_t ix, double s, int axis) const;
    double E0_at(std::size_t ix, double s) const;

    // Pointwise off-grid evaluation (any x inside the extent).
    double V0_point(const Point& x, double s) const;
    double dsV0_point(const Point& x, double s) const;

    const Field& E0() const { return E0_; }
    const std::vector<LevelData>& levels() const { return levels_; }
    int built_levels() const { return static_cast<int>(levels_.size()); }

    // Replaces the sampled base residual with a constant before any level is
    // built; lets tests drive the recursion with a controlled source.
    void override_base_residual(double value);

    // Builds correction level j (1-based); requires level j-1 complete.
    void build_level(int j);
    // Reinstates a previously built level from storage; shape-checked.
    void restore_level(LevelData lvl);
    void build_all() {
        for (int j = 1; j <= par_.J; ++j) build_level(j);
    }

    // Cutoff of level j at node ix (levels are 1-based).
    double chi_level(int j, std::size_t ix) const;

    // Full ansatz and residual at a space-time grid node (is indexes the
    // s-axis); levels up to the built depth contribute.
    double VJ(std::size_t is, std::size_t ix) const;
    double dsVJ(std::size_t is, std::size_t ix) const;
    double EJ(std::size_t is, std::size_t ix) const;

    // Sampled bump values.
    double A_at(std::size_t ix) const { return a_[ix]; }

    std::size_t sj_top(int j) const;  // horizon node index of level j (j=0 -> last)

private:
    ModelParams par_;
    const SurfaceBundle* bundle_;
    SpatialGrid grid_;
    LogAxis sax_;
    GeoFields geo_;
    BumpA bump_;
    Nonlinearity nl_;
    double aexp_;  // 2/(p-1)

    Field a_, lapa_, ga2_;           // bump, its Laplacian, |grad A|^2
    std::array<Field, 4> ga_;
    Field E0_;                       // [ns * nx]
    std::vector<LevelData> levels_;

    void assemble_residual(int j, Field& out) const;
};

struct DecayFit {
    std::string quantity;
    double exponent = 0.0;
    double predicted = 0.0;
    double rms = 0.0;
    double window_lo = 0.0, window_hi = 0.0;
    bool low_confidence = false;  // window under a decade
    std::vector<double> svals, norms;
};

enum class ResidualWeight { none, qhalf };

// L2-in-x norm of the level-j residual per s-node, with a log-log fit over
// [window_lo, window_hi]; set d_ds to fit the s-derivative of the residual.
DecayFit residual_norm_series(const AnsatzStack& st, int j, ResidualWeight w,
                              double window_lo, double window_hi,
                              bool d_ds = false);

struct BoundEntry {
    std::string name;
    double constant = 0.0;   // max over samples of |LHS| / envelope
    double detail = 0.0;     // bound-specific secondary value
};

// Fitted envelope constants for the profile/correction decay laws.
std::vector<BoundEntry> verify_lemma_bounds(const AnsatzStack& st);

// s -> s^{(N+2-(N-2)p)/(2(p-1))} * L2 norm of ds V0 over the ball |x-x0| < sigma*s.
// nq = quadrature nodes per axis (0 picks a dim-aware default).
std::vector<double> dtV0_concentration(const AnsatzStack& st, const Point& x0,
                                       double sigma,
                                       const std::vector<double>& s_list,
                                       int nq = 0);

// Interpolating view of a finished stack for samplers on finer grids:
// cubic in x, linear in log s, with the profile part exact.
class StackSampler {
public:
    explicit StackSampler(const AnsatzStack& st) : st_(&st) {}

    double VJ(const Point& x, double s) const;
    double dsVJ(const Point& x, double s) const;
    double EJ(const Point& x, double s) const;

private:
    const AnsatzStack* st_;
    double level_field(const Field& f, std::size_t valid_top, const Point& x,
                       double s) const;
    double interp_x(const Field& f, std::size_t is, const Point& x) const;
};

}  // namespace forge
