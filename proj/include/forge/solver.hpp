#pragma once

#include <array>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "forge/ansatz.hpp"
#include "forge/grid.hpp"

namespace forge {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Variable-coefficient wave medium on a grid. Empty coefficient fields mean
// the flat case (no mixed or damping terms, unit principal coefficient).
struct WaveMedium {
    const SpatialGrid* grid = nullptr;
    Field inv_1mg2;             // 1 / (1 - |grad psi|^2)
    std::array<Field, 4> gpsi;  // grad psi per axis
    Field lappsi;

    static WaveMedium flat(const SpatialGrid& g);
    static WaveMedium from_geometry(const SpatialGrid& g, const GeoFields& geo);

    bool curved() const { return !inv_1mg2.empty(); }
    // Largest stable step for the given CFL number (<= 0.5): the grid speed
    // shrinks by sqrt(1-g^2)/(1+|grad psi|) to absorb the lagged mixed term.
    double cfl_step(double cfl) const;
};

// Optional per-step forcing (fills a full grid field) and boundary trace.
using SourceFn = std::function<void(double s, Field& out)>;
using TraceFn = std::function<double(double s, std::size_t ix)>;

struct StepperConfig {
    double ds = 0.0;
    double p = 3.0;
    double Bn = 0.0;  // truncation amplitude; <= 0 turns the nonlinearity off
    SourceFn source;
    TraceFn trace;    // boundary value of v; default homogeneous Dirichlet
};

// Two-level explicit integrator: second differences in s and space, with the
// mixed grad-psi term evaluated at the previous half step.
class LeapfrogStepper {
public:
    LeapfrogStepper(const WaveMedium& med, const StepperConfig& cfg);

    // First step is a Taylor expansion using the exact initial derivative.
    void start(double s0, const Field& v0, const Field& vs0);
    void advance();  // throws SolverError on a non-finite slice

    int steps() const { return steps_; }
    double s_new() const { return s0_ + ds_ * steps_; }
    double s_old() const { return s0_ + ds_ * (steps_ - 1); }
    const Field& v_new() const { return cur_; }
    const Field& v_old() const { return old_; }

private:
    const WaveMedium* med_;
    StepperConfig cfg_;
    Nonlinearity nl_;
    double s0_ = 0.0, ds_ = 0.0;
    int steps_ = -1;
    Field old_, cur_, lap_, vs_, grad_, src_;
    std::vector<std::size_t> boundary_;

    void apply_boundary(double s, Field& f) const;
    void accelerate(double s, const Field& v, const Field& vs, Field& acc);
};

struct SolverConfig {
    int n = 100;                // data imposed at S_n = 1/n
    double Bn = 0.0;            // 0 -> sup of |V_J| over the covered window
    double cfl = 0.45;          // must be <= 0.5
    double ds = 0.0;            // 0 -> derived (CFL, reaction rate, min_steps)
    int min_steps = 256;
    double delta0_trial = 1.0;  // horizon; run ends at min(S_n + this, s_J)
    double s_end = 0.0;         // explicit override of the horizon
    double omega = 0.1;         // smallness threshold the audits require
    double boundary_tol = 1e-6;
    bool nonlinear = true;
    int checkpoints = 9;
};

struct WaveState {
    double s = 0.0;
    Field v, vs;
};

struct Trajectory {
    SpatialGrid grid;  // the grid every state's fields live on
    std::vector<WaveState> states;
};

// Per-step weighted diagnostics of the deviation w = v - V_J.
struct StepRecord {
    int step = 0;
    double s = 0.0;
    double N = 0.0;                // weighted norm
    double E = 0.0;                // energy functional
    double K0 = 0.0;               // top-order block
    std::array<double, 4> Kl{};    // per-axis blocks
    double K = 0.0;
    double M2_sob = 0.0;           // H2 + H1 part of the Sobolev norm squared
    double M2 = 0.0;               // plus the reconstructed second s-derivative
    double Gmax = 0.0;             // sup of the conjugation defect
    double coer = 0.0;             // 2E + K - N^2
    double wmax = 0.0;
};

struct EnergyReport {
    double Sn = 0.0, ds = 0.0, s_end = 0.0;
    double Bn = 0.0, omega = 0.0, lambda = 0.0, p = 0.0;
    std::vector<StepRecord> steps;
};

struct SolveResult {
    Trajectory trajectory;
    EnergyReport report;
};

// Integrates the truncated equation forward from ansatz data at S_n and
// populates the diagnostics every step. Aborts on NaN or boundary activity.
SolveResult solve(const SolverConfig& cfg, const AnsatzStack& stack,
                  const SurfaceBundle& bundle);

struct EnergyAudit {
    int steps_in_window = 0;  // steps with N <= omega and M <= omega
    bool coercive_in_window = true;
    bool coercive_all = true;
    double min_margin_window = std::numeric_limits<double>::infinity();
    double min_margin_all = std::numeric_limits<double>::infinity();
    double C_energy = 0.0;  // fitted constant of the energy increment bound
    double C_equiv = 0.0;   // fitted constant of M^2 <= C (N^2 + K)
};

EnergyAudit energy_step_audit(const EnergyReport& report);

struct LowerBoundPoint {
    double s = 0.0;
    double min_margin = 0.0;  // min over the grid before adding the constant
    double g_h1 = 0.0;        // H1 size of the reconstructed correction
};

struct LowerBoundReport {
    std::vector<LowerBoundPoint> series;
    double C_fit = 0.0;     // smallest constant closing the bound everywhere
    double sup_g_h1 = 0.0;
};

// Pointwise check that |ds v|^2 - |grad v|^2 - |ds V0|^2/4 stays above
// -(C + g^2) with g built from the deviation's first derivatives.
LowerBoundReport lower_bound_check(const Trajectory& traj,
                                   const AnsatzStack& stack);

struct ConeTestResult {
    double inside = 0.0;   // max deviation on the shrinking ball
    double outside = 0.0;  // max deviation beyond the initial ball
    double h = 0.0, ds = 0.0;
    int steps = 0;
};

// Runs two initial-data extensions that agree on the ball |x-x0| < R_cone
// and differ beyond R_cone + separation; reports the deviation split.
ConeTestResult cone_uniqueness_test(const SpatialGrid& g, double cfl,
                                    double Bn, const Point& x0, double R_cone,
                                    double tau, double separation = 0.0,
                                    double far_amplitude = 1.0);

struct QWeightAudit {
    double c_ds = 0.0;       // |ds Q| <= c * Q / s
    double c_grad = 0.0;     // |grad Q| <= c * Q / s^{1/k}
    double c_lap = 0.0;      // |lap Q| <= c * Q / s^{2/k}
    double c_grad_ds = 0.0;  // |grad ds Q| <= c * Q / s^{1+1/k}
};

// Fitted constants of the weight's derivative bounds over an s-window.
QWeightAudit q_weight_audit(const AnsatzStack& st, double s_lo, double s_hi);

}  // namespace forge
