#include "forge/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "forge/cutoff.hpp"

namespace forge {

namespace {

void check_finite(const Field& f, int step, const char* what) {
    for (double v : f)
        if (!std::isfinite(v))
            throw SolverError(std::string("non-finite ") + what + " at step " +
                              std::to_string(step));
}

// Linear-in-log-s view of the correction layers; the profile part is always
// evaluated in closed form at the exact time.
class StackSlices {
public:
    explicit StackSlices(const AnsatzStack& st) : st_(&st) {
        const std::size_t n = st.grid().size();
        const int J = st.built_levels();
        top_ = st.sj_top(J);
        chi_.resize(static_cast<std::size_t>(J));
        for (int j = 1; j <= J; ++j) {
            Field& c = chi_[static_cast<std::size_t>(j) - 1];
            c.resize(n);
            for (std::size_t ix = 0; ix < n; ++ix)
                c[ix] = st.chi_level(j, ix);
        }
    }

    double horizon() const { return st_->saxis().s[top_]; }
    std::size_t top_node() const { return top_; }

    void sample(double s, Field* VJ, Field* dVJ, Field* EJ) const {
        const std::size_t n = st_->grid().size();
        std::size_t i;
        double t;
        locate(s, i, t);
        if (VJ) VJ->resize(n);
        if (dVJ) dVJ->resize(n);
        if (EJ) EJ->resize(n);
        const auto& lv = st_->levels();
        for (std::size_t ix = 0; ix < n; ++ix) {
            if (VJ) {
                double acc = st_->V0(ix, s);
                for (std::size_t j = 0; j < lv.size(); ++j)
                    acc += chi_[j][ix] * lerp(lv[j].v, i, t, ix, n);
                (*VJ)[ix] = acc;
            }
            if (dVJ) {
                double acc = st_->dsV0(ix, s);
                for (std::size_t j = 0; j < lv.size(); ++j)
                    acc += chi_[j][ix] * lerp(lv[j].vs, i, t, ix, n);
                (*dVJ)[ix] = acc;
            }
            if (EJ) {
                const double a = st_->EJ(i, ix);
                const double b = (t > 0.0) ? st_->EJ(i + 1, ix) : a;
                (*EJ)[ix] = a + t * (b - a);
            }
        }
    }

    double VJ_point(double s, std::size_t ix) const {
        std::size_t i;
        double t;
        locate(s, i, t);
        double acc = st_->V0(ix, s);
        const auto& lv = st_->levels();
        const std::size_t n = st_->grid().size();
        for (std::size_t j = 0; j < lv.size(); ++j)
            acc += chi_[j][ix] * lerp(lv[j].v, i, t, ix, n);
        return acc;
    }

private:
    const AnsatzStack* st_;
    std::size_t top_ = 0;
    std::vector<Field> chi_;

    void locate(double s, std::size_t& i, double& t) const {
        const LogAxis& ax = st_->saxis();
        const double sc = std::clamp(s, ax.s.front(), ax.s[top_]);
        i = ax.at_or_below(sc);
        if (i >= top_) {
            i = top_;
            t = 0.0;
            return;
        }
        t = std::log(sc / ax.s[i]) / std::log(ax.s[i + 1] / ax.s[i]);
    }

    static double lerp(const Field& f, std::size_t i, double t, std::size_t ix,
                       std::size_t n) {
        const double a = f[i * n + ix];
        return (t > 0.0) ? a + t * (f[(i + 1) * n + ix] - a) : a;
    }
};

// Weighted functionals of the deviation from the ansatz, shared scratch.
class EnergyRecorder {
public:
    EnergyRecorder(const AnsatzStack& st, const StackSlices& sl,
                   double boundary_tol)
        : st_(&st), sl_(&sl), tol_(boundary_tol) {
        const SpatialGrid& g = st.grid();
        const std::size_t n = g.size();
        chiabs_.resize(n);
        qw_.resize(n);
        band_.resize(n);
        const double cell = std::pow(g.h, g.dim);
        std::array<int, 4> idx{};
        for (std::size_t ix = 0; ix < n; ++ix) {
            const Point x = g.point(ix);
            double r2 = 0.0;
            for (int d = 0; d < g.dim; ++d) r2 += x[d] * x[d];
            chiabs_[ix] = chi(std::sqrt(r2));
            g.decode(ix, idx);
            qw_[ix] = g.quad_weight(idx) * cell;
            band_[ix] = g.interior(idx, 2) ? 0 : 1;
        }
    }

    StepRecord measure(int step, double s, const Field& v, const Field& vs) {
        const SpatialGrid& g = st_->grid();
        const GeoFields& geo = st_->geo();
        const Nonlinearity& nl = st_->nonlinearity();
        const ModelParams& mp = st_->params();
        const std::size_t n = g.size();
        const double p = mp.p;
        const double m = 0.5 * (p + 1.0);

        sl_->sample(s, &VJ_, &dVJ_, &EJ_);
        w_.resize(n);
        ws_.resize(n);
        phi_.resize(n);
        Q_.resize(n);
        dssw_.resize(n);

        StepRecord rec;
        rec.step = step;
        rec.s = s;
        double band_max = 0.0;
        double N2 = 0.0, M2sob = 0.0;
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double wv = v[ix] - VJ_[ix];
            const double wsv = vs[ix] - dVJ_[ix];
            w_[ix] = wv;
            ws_[ix] = wsv;
            rec.wmax = std::max(rec.wmax, std::abs(wv));
            if (band_[ix]) band_max = std::max(band_max, std::abs(wv));

            const double V0 = st_->V0(ix, s);
            const double dsV0 = st_->dsV0(ix, s);
            const double y = 1.0 - chiabs_[ix] + V0;
            const double Qh = std::pow(y, m);
            const double Q = Qh * Qh;
            const double Qs = (p + 1.0) * dsV0 * std::pow(y, p);
            Q_[ix] = Q;
            phi_[ix] = wv / Qh;
            const double phis = wsv / Qh - 0.5 * wv * Qs / (Qh * Q);
            const double om = 1.0 - geo.g2[ix];
            const double qx = qw_[ix];

            const double t1 = Q * phis * Q * phis;
            const double t3 = (mp.lambda / 16.0) / (s * s) * Q * wv * wv;
            N2 += qx * (t1 + t3);
            rec.E += qx * (om * t1 + t3);
            rec.E -= qx * Q *
                     (2.0 * nl.F_rem1(VJ_[ix], wv) - nl.fprime(V0) * wv * wv);

            const double dssQh =
                m * (m - 1.0) * std::pow(y, m - 2.0) * dsV0 * dsV0 +
                m * std::pow(y, m - 1.0) * st_->dssV0(ix, s);
            rec.Gmax =
                std::max(rec.Gmax, std::abs(nl.fprime(V0) * Qh - om * dssQh));

            M2sob += qx * (wv * wv + wsv * wsv);
            // PDE right-hand side pieces of the reconstructed dss w; the
            // spatial operator joins after the gradient sweeps.
            dssw_[ix] = nl.f_rem1(VJ_[ix], wv) + nl.fprime(VJ_[ix]) * wv +
                        EJ_[ix];
        }
        if (tol_ > 0.0 && rec.wmax > 0.0 && band_max > tol_ * rec.wmax)
            throw SolverError("boundary activity " + std::to_string(band_max) +
                              " at step " + std::to_string(step));

        laplacian(g, w_, lapw_);
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, w_, d, gw_[d]);
            gradient_axis(g, ws_, d, gws_[d]);
        }
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, phi_, d, tmp_);
            for (std::size_t ix = 0; ix < n; ++ix) {
                const double t2 = Q_[ix] * Q_[ix] * tmp_[ix] * tmp_[ix];
                N2 += qw_[ix] * t2;
                rec.E += qw_[ix] * t2;
            }
        }
        const bool curved = !geo.flat;
        for (std::size_t ix = 0; ix < n; ++ix) {
            double val = dssw_[ix] + lapw_[ix];
            if (curved) {
                for (int d = 0; d < g.dim; ++d)
                    val += 2.0 * geo.gpsi[d][ix] * gws_[d][ix];
                val += geo.lappsi[ix] * ws_[ix];
                val /= 1.0 - geo.g2[ix];
            }
            dssw_[ix] = val;
        }
        double dss2 = 0.0;
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double om = 1.0 - geo.g2[ix];
            double gsum = 0.0;
            for (int d = 0; d < g.dim; ++d) gsum += gws_[d][ix] * gws_[d][ix];
            rec.K0 += qw_[ix] * (om * dssw_[ix] * dssw_[ix] + gsum);
            dss2 += qw_[ix] * dssw_[ix] * dssw_[ix];
            double g1 = 0.0;
            for (int d = 0; d < g.dim; ++d) g1 += gw_[d][ix] * gw_[d][ix];
            M2sob += qw_[ix] * (g1 + gsum);
        }
        double h2 = 0.0;
        for (int l = 0; l < g.dim; ++l) {
            double kl = 0.0;
            for (std::size_t ix = 0; ix < n; ++ix) {
                const double om = 1.0 - geo.g2[ix];
                kl += qw_[ix] * om * gws_[l][ix] * gws_[l][ix];
            }
            for (int d = 0; d < g.dim; ++d) {
                gradient_axis(g, gw_[l], d, tmp_);
                for (std::size_t ix = 0; ix < n; ++ix) {
                    const double t2 = tmp_[ix] * tmp_[ix];
                    kl += qw_[ix] * t2;
                    if (d >= l) h2 += qw_[ix] * t2;
                }
            }
            rec.Kl[static_cast<std::size_t>(l)] = kl;
        }
        rec.K = rec.K0;
        for (int l = 0; l < g.dim; ++l)
            rec.K += rec.Kl[static_cast<std::size_t>(l)];
        rec.M2_sob = M2sob + h2;
        rec.M2 = rec.M2_sob + dss2;
        rec.N = std::sqrt(N2);
        rec.coer = 2.0 * rec.E + rec.K - N2;
        return rec;
    }

private:
    const AnsatzStack* st_;
    const StackSlices* sl_;
    double tol_;
    Field chiabs_, qw_;
    std::vector<char> band_;
    Field VJ_, dVJ_, EJ_, w_, ws_, phi_, Q_, dssw_, lapw_, tmp_;
    std::array<Field, 4> gw_, gws_;
};

}  // namespace

WaveMedium WaveMedium::flat(const SpatialGrid& g) {
    WaveMedium m;
    m.grid = &g;
    return m;
}

WaveMedium WaveMedium::from_geometry(const SpatialGrid& g,
                                     const GeoFields& geo) {
    if (geo.flat) return flat(g);
    WaveMedium m;
    m.grid = &g;
    const std::size_t n = g.size();
    m.inv_1mg2.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.inv_1mg2[i] = 1.0 / (1.0 - geo.g2[i]);
    for (int d = 0; d < g.dim; ++d) m.gpsi[d] = geo.gpsi[d];
    m.lappsi = geo.lappsi;
    return m;
}

double WaveMedium::cfl_step(double cfl) const {
    if (!(cfl > 0.0) || cfl > 0.5)
        throw SolverError("cfl number must lie in (0, 0.5]");
    double fac = 1.0;
    if (curved()) {
        const std::size_t n = grid->size();
        for (std::size_t i = 0; i < n; ++i) {
            double g2 = 0.0;
            for (int d = 0; d < grid->dim; ++d)
                g2 += gpsi[d][i] * gpsi[d][i];
            const double f = std::sqrt(1.0 - g2) / (1.0 + std::sqrt(g2));
            fac = std::min(fac, f);
        }
    }
    return cfl * grid->h * fac;
}

LeapfrogStepper::LeapfrogStepper(const WaveMedium& med,
                                 const StepperConfig& cfg)
    : med_(&med), cfg_(cfg), nl_(cfg.p) {
    if (!(cfg.ds > 0.0)) throw SolverError("step size must be positive");
    const SpatialGrid& g = *med.grid;
    ds_ = cfg.ds;
    std::array<int, 4> idx{};
    for (std::size_t ix = 0; ix < g.size(); ++ix) {
        g.decode(ix, idx);
        if (!g.interior(idx, 1)) boundary_.push_back(ix);
    }
}

void LeapfrogStepper::apply_boundary(double s, Field& f) const {
    for (std::size_t b : boundary_)
        f[b] = cfg_.trace ? cfg_.trace(s, b) : 0.0;
}

void LeapfrogStepper::accelerate(double s, const Field& v, const Field& vs,
                                 Field& acc) {
    const SpatialGrid& g = *med_->grid;
    const std::size_t n = g.size();
    laplacian(g, v, acc);
    if (med_->curved()) {
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, vs, d, grad_);
            for (std::size_t i = 0; i < n; ++i)
                acc[i] += 2.0 * med_->gpsi[d][i] * grad_[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            acc[i] += med_->lappsi[i] * vs[i];
    }
    if (cfg_.Bn > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            acc[i] += nl_.f_trunc(v[i], cfg_.Bn);
    if (cfg_.source) {
        cfg_.source(s, src_);
        for (std::size_t i = 0; i < n; ++i) acc[i] += src_[i];
    }
    if (med_->curved())
        for (std::size_t i = 0; i < n; ++i) acc[i] *= med_->inv_1mg2[i];
}

void LeapfrogStepper::start(double s0, const Field& v0, const Field& vs0) {
    const std::size_t n = med_->grid->size();
    if (v0.size() != n || vs0.size() != n)
        throw SolverError("initial data does not match the grid");
    s0_ = s0;
    old_ = v0;
    src_.assign(n, 0.0);
    accelerate(s0, v0, vs0, lap_);
    cur_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        cur_[i] = v0[i] + ds_ * vs0[i] + 0.5 * ds_ * ds_ * lap_[i];
    steps_ = 1;
    apply_boundary(s_new(), cur_);
    check_finite(cur_, steps_, "slice");
}

void LeapfrogStepper::advance() {
    if (steps_ < 1) throw SolverError("stepper not started");
    const std::size_t n = med_->grid->size();
    vs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) vs_[i] = (cur_[i] - old_[i]) / ds_;
    accelerate(s_new(), cur_, vs_, lap_);
    for (std::size_t i = 0; i < n; ++i)
        old_[i] = 2.0 * cur_[i] - old_[i] + ds_ * ds_ * lap_[i];
    std::swap(old_, cur_);
    ++steps_;
    apply_boundary(s_new(), cur_);
    check_finite(cur_, steps_, "slice");
}

SolveResult solve(const SolverConfig& cfg, const AnsatzStack& stack,
                  const SurfaceBundle& bundle) {
    if (bundle.dim() != stack.grid().dim)
        throw SolverError("bundle and stack dimensions disagree");
    if (cfg.n < 1) throw SolverError("truncation index must be positive");
    const double Sn = 1.0 / cfg.n;
    StackSlices slices(stack);
    const double sJ = slices.horizon();
    if (Sn <= stack.saxis().s.front() || Sn >= sJ)
        throw SolverError("data time 1/n is outside the stack horizon");
    double s_end = cfg.s_end > 0.0 ? cfg.s_end : Sn + cfg.delta0_trial;
    s_end = std::min(s_end, sJ);
    if (s_end <= Sn) throw SolverError("empty integration window");

    // Truncation level: sup of the ansatz amplitude over the covered window.
    double B = cfg.Bn;
    if (B <= 0.0) {
        Field v0;
        slices.sample(Sn, &v0, nullptr, nullptr);
        for (double x : v0) B = std::max(B, std::abs(x));
        const std::size_t n = stack.grid().size();
        for (std::size_t i = 0; i <= slices.top_node(); ++i) {
            if (stack.saxis().s[i] <= Sn) continue;
            for (std::size_t ix = 0; ix < n; ++ix)
                B = std::max(B, std::abs(stack.VJ(i, ix)));
        }
    }
    if (B < 1.0)
        throw SolverError("truncation amplitude below one; data too shallow");

    const WaveMedium med =
        stack.geo().flat ? WaveMedium::flat(stack.grid())
                         : WaveMedium::from_geometry(stack.grid(), stack.geo());
    const double ds_cfl = med.cfl_step(cfg.cfl);
    double ds = cfg.ds;
    if (ds <= 0.0) {
        // Keep the explicit step under the reaction rate and resolve the run.
        const double rate =
            std::sqrt(std::max(1.0, stack.params().p *
                                        std::pow(B, stack.params().p - 1.0)));
        ds = std::min({ds_cfl, 0.05 / rate,
                       (s_end - Sn) / std::max(1, cfg.min_steps)});
    } else if (ds > ds_cfl) {
        throw SolverError("requested step violates the CFL bound");
    }
    const int nsteps = std::max(1, static_cast<int>(
                                       std::ceil((s_end - Sn) / ds - 1e-9)));
    ds = (s_end - Sn) / nsteps;

    Field v0, vs0;
    slices.sample(Sn, &v0, &vs0, nullptr);

    StepperConfig scfg;
    scfg.ds = ds;
    scfg.p = stack.params().p;
    scfg.Bn = cfg.nonlinear ? B : 0.0;
    scfg.trace = [&slices](double s, std::size_t ix) {
        return slices.VJ_point(s, ix);
    };
    LeapfrogStepper lf(med, scfg);
    lf.start(Sn, v0, vs0);

    EnergyRecorder rec(stack, slices, cfg.boundary_tol);
    SolveResult out;
    out.trajectory.grid = stack.grid();
    out.report.Sn = Sn;
    out.report.ds = ds;
    out.report.s_end = s_end;
    out.report.Bn = B;
    out.report.omega = cfg.omega;
    out.report.lambda = stack.params().lambda;
    out.report.p = stack.params().p;
    out.report.steps.reserve(static_cast<std::size_t>(nsteps) + 1);

    const int stride =
        std::max(1, nsteps / std::max(1, cfg.checkpoints - 1));
    auto keep = [&](int m) { return m % stride == 0 || m == nsteps; };

    out.report.steps.push_back(rec.measure(0, Sn, v0, vs0));
    if (keep(0)) out.trajectory.states.push_back({Sn, v0, vs0});

    Field prev2, vsc(v0.size());
    for (int m = 1; m <= nsteps; ++m) {
        prev2 = lf.v_old();
        lf.advance();
        const double sm = Sn + ds * m;
        for (std::size_t i = 0; i < vsc.size(); ++i)
            vsc[i] = (lf.v_new()[i] - prev2[i]) / (2.0 * ds);
        out.report.steps.push_back(rec.measure(m, sm, lf.v_old(), vsc));
        if (keep(m)) out.trajectory.states.push_back({sm, lf.v_old(), vsc});
    }
    return out;
}

EnergyAudit energy_step_audit(const EnergyReport& report) {
    EnergyAudit a;
    const double om = report.omega;
    const std::size_t ns = report.steps.size();
    for (std::size_t i = 0; i < ns; ++i) {
        const StepRecord& r = report.steps[i];
        const double M = std::sqrt(std::max(0.0, r.M2));
        const bool in = r.N <= om && M <= om;
        a.min_margin_all = std::min(a.min_margin_all, r.coer);
        if (r.coer < 0.0) a.coercive_all = false;
        const double denom = r.N * r.N + r.K;
        if (denom > 0.0) a.C_equiv = std::max(a.C_equiv, r.M2 / denom);
        if (i + 1 < ns) {
            const double dE =
                (report.steps[i + 1].E - r.E) / report.ds;
            const double s = r.s;
            const double lam = report.lambda;
            const double drift = 0.25 * lam / s * r.N * r.N;
            const double basis =
                std::pow(s, lam - 1.0) * r.N + r.N * r.N / std::sqrt(s) +
                (std::pow(r.N, report.p + 1.0) + std::pow(M, report.p + 1.0)) /
                    s;
            if (basis > 0.0 && dE > drift)
                a.C_energy = std::max(a.C_energy, (dE - drift) / basis);
        }
        if (!in) continue;
        ++a.steps_in_window;
        a.min_margin_window = std::min(a.min_margin_window, r.coer);
        if (r.coer < 0.0) a.coercive_in_window = false;
    }
    return a;
}

LowerBoundReport lower_bound_check(const Trajectory& traj,
                                   const AnsatzStack& stack) {
    LowerBoundReport out;
    const SpatialGrid& g = stack.grid();
    const std::size_t n = g.size();
    StackSlices slices(stack);
    Field VJ, dVJ, gv, gw, gfield, tmp;
    std::vector<Field> gradv(static_cast<std::size_t>(g.dim));
    Field qw(n);
    std::array<int, 4> idx{};
    const double cell = std::pow(g.h, g.dim);
    for (std::size_t ix = 0; ix < n; ++ix) {
        g.decode(ix, idx);
        qw[ix] = g.quad_weight(idx) * cell;
    }
    for (const WaveState& st : traj.states) {
        slices.sample(st.s, &VJ, &dVJ, nullptr);
        for (int d = 0; d < g.dim; ++d)
            gradient_axis(g, st.v, d, gradv[static_cast<std::size_t>(d)]);
        // |grad w| reuses the trajectory gradients minus the stack's.
        gfield.assign(n, 0.0);
        Field wf(n);
        for (std::size_t ix = 0; ix < n; ++ix) wf[ix] = st.v[ix] - VJ[ix];
        Field gwd;
        std::vector<double> gw2(n, 0.0);
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, wf, d, gwd);
            for (std::size_t ix = 0; ix < n; ++ix)
                gw2[ix] += gwd[ix] * gwd[ix];
        }
        LowerBoundPoint pt;
        pt.s = st.s;
        pt.min_margin = std::numeric_limits<double>::infinity();
        for (std::size_t ix = 0; ix < n; ++ix) {
            double gv2 = 0.0;
            for (int d = 0; d < g.dim; ++d) {
                const double gd = gradv[static_cast<std::size_t>(d)][ix];
                gv2 += gd * gd;
            }
            const double ds0 = stack.dsV0(ix, st.s);
            const double P =
                st.vs[ix] * st.vs[ix] - gv2 - 0.25 * ds0 * ds0;
            const double ws = st.vs[ix] - dVJ[ix];
            const double g2c = ws * ws + gw2[ix];
            gfield[ix] = std::sqrt(g2c);
            const double margin = P + g2c;
            pt.min_margin = std::min(pt.min_margin, margin);
            if (margin < 0.0) out.C_fit = std::max(out.C_fit, -margin);
        }
        double h1 = 0.0;
        for (std::size_t ix = 0; ix < n; ++ix)
            h1 += qw[ix] * gfield[ix] * gfield[ix];
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, gfield, d, tmp);
            for (std::size_t ix = 0; ix < n; ++ix)
                h1 += qw[ix] * tmp[ix] * tmp[ix];
        }
        pt.g_h1 = std::sqrt(h1);
        out.sup_g_h1 = std::max(out.sup_g_h1, pt.g_h1);
        out.series.push_back(pt);
    }
    return out;
}

ConeTestResult cone_uniqueness_test(const SpatialGrid& g, double cfl,
                                    double Bn, const Point& x0, double R_cone,
                                    double tau, double separation,
                                    double far_amplitude) {
    if (!(tau > 0.0) || tau >= R_cone)
        throw SolverError("cone height must lie in (0, R_cone)");
    if (separation <= 0.0) separation = 4.0 * g.h;
    const std::size_t n = g.size();

    auto bump = [](double r2) {
        return r2 < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r2)) : 0.0;
    };
    auto dist2 = [&](std::size_t ix, const Point& c) {
        const Point x = g.point(ix);
        double r2 = 0.0;
        for (int d = 0; d < g.dim; ++d)
            r2 += (x[d] - c[d]) * (x[d] - c[d]);
        return r2;
    };

    const double rho = 0.6 * R_cone;
    const double rho_far = 0.5 * R_cone;
    Point cfar = x0;
    cfar[0] += R_cone + separation + rho_far + 2.0 * g.h;
    // The far feature plus its light cone must stay inside the domain.
    for (int d = 0; d < g.dim; ++d) {
        const double hi = g.x0[d] + g.h * (g.n[d] - 1);
        if (cfar[d] + rho_far + tau + 4.0 * g.h > hi ||
            x0[d] - R_cone - 4.0 * g.h < g.x0[d])
            throw SolverError("cone geometry exits the grid");
    }

    Field va(n), vb(n), zero(n, 0.0);
    for (std::size_t ix = 0; ix < n; ++ix) {
        const double base = bump(dist2(ix, x0) / (rho * rho));
        va[ix] = base;
        vb[ix] = base +
                 far_amplitude * bump(dist2(ix, cfar) / (rho_far * rho_far));
    }

    const WaveMedium med = WaveMedium::flat(g);
    StepperConfig sc;
    sc.ds = med.cfl_step(cfl);
    sc.Bn = Bn;
    LeapfrogStepper la(med, sc), lb(med, sc);
    la.start(0.0, va, zero);
    lb.start(0.0, vb, zero);

    ConeTestResult out;
    out.h = g.h;
    out.ds = sc.ds;
    auto scan = [&](double t, const Field& fa, const Field& fb) {
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double dev = std::abs(fa[ix] - fb[ix]);
            const double r = std::sqrt(dist2(ix, x0));
            if (r < R_cone - t)
                out.inside = std::max(out.inside, dev);
            else if (r > R_cone)
                out.outside = std::max(out.outside, dev);
        }
    };
    scan(0.0, va, vb);
    while ((la.steps() + 1) * sc.ds < tau) {
        la.advance();
        lb.advance();
        ++out.steps;
        scan(la.s_new(), la.v_new(), lb.v_new());
    }
    return out;
}

QWeightAudit q_weight_audit(const AnsatzStack& st, double s_lo, double s_hi) {
    QWeightAudit out;
    const SpatialGrid& g = st.grid();
    const std::size_t n = g.size();
    const ModelParams& mp = st.params();
    const double kk = static_cast<double>(mp.k);
    Field Q(n), Qs(n), lapQ, tmp;
    for (std::size_t i = 0; i < st.saxis().s.size(); ++i) {
        const double s = st.saxis().s[i];
        if (s < s_lo || s > s_hi) continue;
        for (std::size_t ix = 0; ix < n; ++ix) {
            const Point x = g.point(ix);
            double r2 = 0.0;
            for (int d = 0; d < g.dim; ++d) r2 += x[d] * x[d];
            const double y = 1.0 - chi(std::sqrt(r2)) + st.V0(ix, s);
            Q[ix] = std::pow(y, mp.p + 1.0);
            Qs[ix] = (mp.p + 1.0) * st.dsV0(ix, s) * std::pow(y, mp.p);
        }
        laplacian(g, Q, lapQ);
        for (std::size_t ix = 0; ix < n; ++ix) {
            out.c_ds = std::max(out.c_ds, std::abs(Qs[ix]) * s / Q[ix]);
            out.c_lap = std::max(
                out.c_lap, std::abs(lapQ[ix]) * std::pow(s, 2.0 / kk) / Q[ix]);
        }
        for (int d = 0; d < g.dim; ++d) {
            gradient_axis(g, Q, d, tmp);
            for (std::size_t ix = 0; ix < n; ++ix)
                out.c_grad = std::max(
                    out.c_grad,
                    std::abs(tmp[ix]) * std::pow(s, 1.0 / kk) / Q[ix]);
            gradient_axis(g, Qs, d, tmp);
            for (std::size_t ix = 0; ix < n; ++ix)
                out.c_grad_ds = std::max(
                    out.c_grad_ds,
                    std::abs(tmp[ix]) * std::pow(s, 1.0 + 1.0 / kk) / Q[ix]);
        }
    }
    return out;
}

}  // namespace forge
