#include "fracflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fracflow {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrackShrink = 0.5;
constexpr double kStepFloor = 1e-18;

NodalVector sample_forcing(const Grid& g, const Forcing& f, double t0, double t1, bool point) {
    NodalVector out(static_cast<size_t>(g.size()), 0.0);
    if (point)
        f.eval(g, t1, out);
    else
        f.eval_mean(g, t0, t1, out);
    return out;
}

/// Step objective ||v - u_prev||_h^2 / (2 dt) + smooth energy - <f, v>_h;
/// overflow degrades to +inf so line searches just reject the trial.
double objective(const FunctionalSpec& spec, const NodalVector& u_prev, double t, const NodalVector& f,
                 double dt, const NodalVector& v) {
    const EvalResult e = eval_smooth_part(spec, v, t);
    if (e.overflow) return std::numeric_limits<double>::infinity();
    const Grid& g = *spec.grid;
    Ksum acc;
    for (int i = 0; i < g.size(); ++i) {
        const size_t k = static_cast<size_t>(i);
        const double d = v[k] - u_prev[k];
        acc.add((0.5 / dt * d * d - f[k] * v[k]) * g.weight[k]);
    }
    return acc.value() + e.value;
}

/// Weighted gradient of the step objective: (v - u_prev) / dt + grad / h - f.
bool objective_gradient(const FunctionalSpec& spec, const NodalVector& u_prev, double t,
                        const NodalVector& f, double dt, const NodalVector& v, NodalVector& out) {
    GradResult gr = grad_guarded(spec, v, t);
    if (!gr.ok) return false;
    const Grid& g = *spec.grid;
    out.resize(v.size());
    for (int i = 0; i < g.size(); ++i) {
        const size_t k = static_cast<size_t>(i);
        out[k] = (v[k] - u_prev[k]) / dt + gr.g[k] / g.weight[k] - f[k];
    }
    return true;
}

double barzilai_borwein(const Grid& g, const NodalVector& v, const NodalVector& v_prev,
                        const NodalVector& grad, const NodalVector& grad_prev, double fallback) {
    Ksum num, den;
    for (int i = 0; i < g.size(); ++i) {
        const size_t k = static_cast<size_t>(i);
        const double dv = v[k] - v_prev[k];
        const double dg = grad[k] - grad_prev[k];
        num.add(dv * dv * g.weight[k]);
        den.add(dv * dg * g.weight[k]);
    }
    const double top = num.value(), bottom = den.value();
    if (!(bottom > 0.0) || !(top > 0.0)) return fallback;
    const double alpha = top / bottom;
    return std::clamp(alpha, 1e-14, 1e8);
}

StepResult smooth_step(const FunctionalSpec& spec, const NodalVector& u_prev, double t_next,
                       const NodalVector& f_avg, const StepConfig& cfg) {
    const Grid& g = *spec.grid;
    const double tol_eff = cfg.inner_tol * (1.0 + norm_h(g, f_avg));
    StepResult res;
    NodalVector v = u_prev;
    double fv = objective(spec, u_prev, t_next, f_avg, cfg.dt, v);
    NodalVector grad_v;
    if (!objective_gradient(spec, u_prev, t_next, f_avg, cfg.dt, v, grad_v))
        throw OverflowError("implicit_step: gradient overflow at the incoming state; reduce dt or cap the exponents");
    double gnorm = norm_h(g, grad_v);

    NodalVector v_prev, grad_prev, trial(v.size()), trial_grad;
    double alpha = cfg.dt;
    while (gnorm > tol_eff) {
        if (res.stats.inner_iterations >= cfg.inner_max_iter)
            throw NonConvergenceError("implicit_step: residual " + std::to_string(gnorm) + " after " +
                                      std::to_string(cfg.inner_max_iter) + " inner iterations");
        res.stats.inner_iterations += 1;
        if (!v_prev.empty()) alpha = barzilai_borwein(g, v, v_prev, grad_v, grad_prev, cfg.dt);
        double beta = alpha;
        double ft = std::numeric_limits<double>::infinity();
        // Below this, objective differences drown in rounding and the descent
        // test must switch to gradient-norm progress.
        const double f_noise =
            std::isfinite(fv) ? 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(fv)) : 0.0;
        bool have_trial_grad = false;
        while (true) {
            for (size_t i = 0; i < v.size(); ++i) trial[i] = v[i] - beta * grad_v[i];
            ft = objective(spec, u_prev, t_next, f_avg, cfg.dt, trial);
            have_trial_grad = false;
            if (ft <= fv - kArmijo * beta * gnorm * gnorm) break;
            if (kArmijo * beta * gnorm * gnorm <= f_noise && ft <= fv + f_noise) {
                have_trial_grad = objective_gradient(spec, u_prev, t_next, f_avg, cfg.dt, trial, trial_grad);
                if (have_trial_grad && norm_h(g, trial_grad) <= 0.999 * gnorm) break;
            }
            beta *= kBacktrackShrink;
            res.stats.backtracks += 1;
            if (beta < kStepFloor) {
                if (std::isinf(fv))
                    throw OverflowError(
                        "implicit_step: objective stays non-finite; reduce dt or cap the exponents");
                throw NonConvergenceError("implicit_step: line search stalled at residual " +
                                          std::to_string(gnorm));
            }
        }
        v_prev = v;
        grad_prev = grad_v;
        v.swap(trial);
        fv = ft;
        if (have_trial_grad)
            grad_v = trial_grad;
        else if (!objective_gradient(spec, u_prev, t_next, f_avg, cfg.dt, v, grad_v))
            throw OverflowError("implicit_step: gradient overflow inside the solve; reduce dt");
        gnorm = norm_h(g, grad_v);
    }
    res.stats.residual = gnorm;
    res.u = std::move(v);
    return res;
}

StepResult indicator_step(const FunctionalSpec& spec, const NodalVector& u_prev, double t_next,
                          const NodalVector& f_avg, const StepConfig& cfg) {
    NodalVector target(u_prev.size());
    for (size_t i = 0; i < u_prev.size(); ++i) target[i] = u_prev[i] + cfg.dt * f_avg[i];
    const ConstraintSet cs = constraint_set(spec, t_next);
    ProjectionReport prep;
    StepResult res;
    res.u = project(cs, target, cfg.proj_tol, cfg.proj_max, &prep);
    res.stats.inner_iterations = 1;
    res.stats.projection_sweeps = prep.sweeps;
    res.stats.residual = prep.max_violation;
    return res;
}

StepResult mixed_step(const FunctionalSpec& spec, const NodalVector& u_prev, double t_next,
                      const NodalVector& f_avg, const StepConfig& cfg) {
    const Grid& g = *spec.grid;
    const ConstraintSet cs = constraint_set(spec, t_next);
    const double tol_eff = cfg.inner_tol * (1.0 + norm_h(g, f_avg));
    StepResult res;
    ProjectionReport prep;
    NodalVector v = project(cs, u_prev, cfg.proj_tol, cfg.proj_max, &prep);
    res.stats.projection_sweeps += prep.sweeps;
    double fv = objective(spec, u_prev, t_next, f_avg, cfg.dt, v);
    NodalVector grad_v, probe(v.size()), trial(v.size());
    double alpha = cfg.dt;
    NodalVector v_prev, grad_prev;
    while (true) {
        if (!objective_gradient(spec, u_prev, t_next, f_avg, cfg.dt, v, grad_v))
            throw OverflowError("implicit_step: gradient overflow inside the solve; reduce dt");
        // Fixed-step projection residual: v solves the step exactly when the
        // dt-sized projected descent returns it unchanged. Measured with the
        // fixed probe step so a bold line-search step cannot mask a residual.
        for (size_t i = 0; i < v.size(); ++i) probe[i] = v[i] - cfg.dt * grad_v[i];
        probe = project(cs, probe, cfg.proj_tol, cfg.proj_max, &prep);
        res.stats.projection_sweeps += prep.sweeps;
        NodalVector gap(v.size());
        for (size_t i = 0; i < v.size(); ++i) gap[i] = v[i] - probe[i];
        const double residual = norm_h(g, gap) / cfg.dt;
        if (residual <= tol_eff) {
            res.stats.residual = residual;
            res.u = std::move(v);
            return res;
        }
        if (res.stats.inner_iterations >= cfg.inner_max_iter)
            throw NonConvergenceError("implicit_step: projected residual " + std::to_string(residual) +
                                      " after " + std::to_string(cfg.inner_max_iter) + " inner iterations");
        res.stats.inner_iterations += 1;
        if (!v_prev.empty()) alpha = barzilai_borwein(g, v, v_prev, grad_v, grad_prev, cfg.dt);
        double beta = alpha;
        while (true) {
            if (beta == cfg.dt) {
                trial = probe;
            } else {
                for (size_t i = 0; i < v.size(); ++i) trial[i] = v[i] - beta * grad_v[i];
                trial = project(cs, trial, cfg.proj_tol, cfg.proj_max, &prep);
                res.stats.projection_sweeps += prep.sweeps;
            }
            const double ft = objective(spec, u_prev, t_next, f_avg, cfg.dt, trial);
            // Quadratic upper-bound acceptance keeps descent valid without
            // curvature assumptions on the energy.
            Ksum lin, sq;
            for (int i = 0; i < g.size(); ++i) {
                const size_t k = static_cast<size_t>(i);
                const double d = trial[k] - v[k];
                lin.add(grad_v[k] * d * g.weight[k]);
                sq.add(d * d * g.weight[k]);
            }
            const double model = lin.value() + sq.value() / (2.0 * beta);
            bool accept = ft <= fv + model;
            if (!accept) {
                const double f_noise =
                    std::isinf(fv) ? 0.0
                                   : 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(fv));
                if (-model <= f_noise && ft <= fv + f_noise) {
                    // objective differences are sub-rounding here; require the
                    // trial's own fixed-probe residual to shrink instead
                    NodalVector grad_t;
                    if (objective_gradient(spec, u_prev, t_next, f_avg, cfg.dt, trial, grad_t)) {
                        NodalVector probe_t(trial.size());
                        for (size_t i = 0; i < trial.size(); ++i)
                            probe_t[i] = trial[i] - cfg.dt * grad_t[i];
                        probe_t = project(cs, probe_t, cfg.proj_tol, cfg.proj_max, &prep);
                        res.stats.projection_sweeps += prep.sweeps;
                        NodalVector gap_t(trial.size());
                        for (size_t i = 0; i < trial.size(); ++i) gap_t[i] = trial[i] - probe_t[i];
                        accept = norm_h(g, gap_t) / cfg.dt <= 0.999 * residual;
                    }
                }
            }
            if (accept) {
                v_prev = v;
                grad_prev = grad_v;
                v = trial;
                fv = ft;
                break;
            }
            beta *= kBacktrackShrink;
            if (beta < kStepFloor) {
                if (std::isinf(fv))
                    throw OverflowError(
                        "implicit_step: objective stays non-finite; reduce dt or cap the exponents");
                throw NonConvergenceError("implicit_step: projected line search stalled at residual " +
                                          std::to_string(residual));
            }
        }
    }
}

}  // namespace

NodalVector step_derivative(const Trajectory& traj, int k) {
    const double dt = traj.times[static_cast<size_t>(k) + 1] - traj.times[static_cast<size_t>(k)];
    const NodalVector& a = traj.states[static_cast<size_t>(k)];
    const NodalVector& b = traj.states[static_cast<size_t>(k) + 1];
    NodalVector out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = (b[i] - a[i]) / dt;
    return out;
}

StepResult implicit_step(const FunctionalSpec& spec, const NodalVector& u_prev, double t_next,
                         const NodalVector& f_avg, const StepConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw ConfigError("implicit_step: dt must be positive");
    if (!(cfg.inner_tol > 0.0)) throw ConfigError("implicit_step: inner tolerance must be positive");
    if (u_prev.size() != f_avg.size()) throw DomainError("implicit_step: state and forcing sizes differ");
    switch (spec.kind) {
        case FunctionalSpec::Kind::IndicatorKt:
        case FunctionalSpec::Kind::IndicatorKinf:
            return indicator_step(spec, u_prev, t_next, f_avg, cfg);
        case FunctionalSpec::Kind::MixedO:
            return mixed_step(spec, u_prev, t_next, f_avg, cfg);
        default:
            return smooth_step(spec, u_prev, t_next, f_avg, cfg);
    }
}

Trajectory solve_cauchy(const FunctionalSpec& spec, const ProblemData& data, const StepConfig& cfg) {
    const Grid& g = *spec.grid;
    if (static_cast<int>(data.u0.size()) != g.size())
        throw ConfigError("solve_cauchy: initial state does not match the grid");
    if (!(data.T > 0.0)) throw ConfigError("solve_cauchy: horizon must be positive");
    const long K = std::lround(data.T / cfg.dt);
    if (K < 1 || std::abs(static_cast<double>(K) * cfg.dt - data.T) > 1e-9 * std::max(1.0, data.T))
        throw ConfigError("solve_cauchy: dt must divide the horizon evenly");

    NodalVector u = data.u0;
    if (spec.has_constraint_part()) u = project(constraint_set(spec, 0.0), u, cfg.proj_tol, cfg.proj_max);

    Trajectory traj;
    traj.times.reserve(static_cast<size_t>(K) + 1);
    traj.states.reserve(static_cast<size_t>(K) + 1);
    traj.energies.reserve(static_cast<size_t>(K) + 1);
    traj.stats.reserve(static_cast<size_t>(K));
    traj.times.push_back(0.0);
    traj.states.push_back(u);
    traj.energies.push_back(eval_guarded(spec, u, 0.0).value);
    for (long k = 1; k <= K; ++k) {
        const double t0 = static_cast<double>(k - 1) * cfg.dt;
        const double t1 = (k == K) ? data.T : static_cast<double>(k) * cfg.dt;
        const NodalVector f = sample_forcing(g, data.forcing, t0, t1, cfg.forcing_point_sample);
        StepResult step = implicit_step(spec, u, t1, f, cfg);
        u = std::move(step.u);
        traj.times.push_back(t1);
        traj.states.push_back(u);
        traj.energies.push_back(eval_guarded(spec, u, t1).value);
        traj.stats.push_back(step.stats);
    }
    return traj;
}

namespace {

double min_exponent(const FunctionalSpec& spec) {
    switch (spec.kind) {
        case FunctionalSpec::Kind::WeightedConstantP:
            return spec.constant_p;
        case FunctionalSpec::Kind::VariableP:
        case FunctionalSpec::Kind::MixedO:
            return spec.exponent.p_minus;
        default:
            return std::numeric_limits<double>::infinity();  // indicator kinds: no finite exponent
    }
}

bool uses_weight(const FunctionalSpec& spec) {
    return spec.kind == FunctionalSpec::Kind::WeightedConstantP ||
           spec.kind == FunctionalSpec::Kind::IndicatorKt;
}

}  // namespace

Trajectory solve_periodic(const FunctionalSpec& spec, const ProblemData& data, const StepConfig& cfg,
                          const PeriodicConfig& pcfg, PeriodicReport* report) {
    const Grid& g = *spec.grid;
    if (min_exponent(spec) < 2.0)
        throw DomainError("solve_periodic: every exponent must be at least 2");
    if (uses_weight(spec)) {
        for (const NamedCheck& c : validate_weight_for_period(spec.weight))
            if (!c.pass) throw DomainError("solve_periodic: weight fails the period gate: " + c.name);
    }
    const long K = std::lround(data.T / cfg.dt);
    if (K < 1 || std::abs(static_cast<double>(K) * cfg.dt - data.T) > 1e-9 * std::max(1.0, data.T))
        throw ConfigError("solve_periodic: dt must divide the period evenly");

    // The flow moves the weighted mean by exactly dt <f, 1>_h per step, so a
    // nonzero period total rules out any periodic orbit.
    const NodalVector ones(static_cast<size_t>(g.size()), 1.0);
    Ksum pumped;
    Ksum fsize;
    for (long k = 1; k <= K; ++k) {
        const double t0 = static_cast<double>(k - 1) * cfg.dt;
        const double t1 = (k == K) ? data.T : static_cast<double>(k) * cfg.dt;
        const NodalVector f = sample_forcing(g, data.forcing, t0, t1, cfg.forcing_point_sample);
        pumped.add(cfg.dt * dot_h(g, f, ones));
        fsize.add(cfg.dt * norm_h(g, f));
    }
    if (std::abs(pumped.value()) > 1e-9 * (1.0 + fsize.value()))
        throw ConfigError("solve_periodic: forcing pumps the conserved weighted mean by " +
                          std::to_string(pumped.value()) + " per period");

    PeriodicReport local;
    PeriodicReport& rep = report ? *report : local;
    rep = PeriodicReport{};

    ProblemData cycle = data;
    cycle.u0.assign(static_cast<size_t>(g.size()), 0.0);
    double best_gap = std::numeric_limits<double>::infinity();
    int stall = 0;
    bool averaging_active = false;
    for (int it = 1; it <= pcfg.fp_max_iter; ++it) {
        const Trajectory traj = solve_cauchy(spec, cycle, cfg);
        NodalVector diff(static_cast<size_t>(g.size()));
        for (size_t i = 0; i < diff.size(); ++i) diff[i] = traj.back()[i] - traj.states.front()[i];
        const double gap = norm_h(g, diff);
        rep.iterations = it;
        rep.gap = gap;
        rep.gaps.push_back(gap);
        if (gap <= pcfg.fp_tol) {
            rep.converged = true;
            return traj;
        }
        if (gap > 0.999 * best_gap) {
            if (++stall >= pcfg.stall_window) {
                if (pcfg.averaging && !averaging_active) {
                    averaging_active = true;
                    rep.used_averaging = true;
                    stall = 0;
                } else {
                    throw NonConvergenceError("solve_periodic: return-map gap stalled at " +
                                              std::to_string(gap));
                }
            }
        } else {
            stall = 0;
        }
        best_gap = std::min(best_gap, gap);
        if (averaging_active) {
            for (size_t i = 0; i < cycle.u0.size(); ++i)
                cycle.u0[i] = 0.5 * (cycle.u0[i] + traj.back()[i]);
        } else {
            cycle.u0 = traj.back();
        }
    }
    throw NonConvergenceError("solve_periodic: no fixed point within " + std::to_string(pcfg.fp_max_iter) +
                              " sweeps; last gap " + std::to_string(rep.gap));
}

DependenceReport continuous_dependence_check(const FunctionalSpec& spec, const ProblemData& d1,
                                             const ProblemData& d2, const StepConfig& cfg) {
    if (d1.T != d2.T) throw ConfigError("continuous_dependence_check: horizons differ");
    const Grid& g = *spec.grid;
    const Trajectory t1 = solve_cauchy(spec, d1, cfg);
    const Trajectory t2 = solve_cauchy(spec, d2, cfg);

    NodalVector diff(static_cast<size_t>(g.size()));
    for (size_t i = 0; i < diff.size(); ++i) diff[i] = d1.u0[i] - d2.u0[i];
    const double base = norm_h(g, diff);

    double scale = std::max(norm_h(g, d1.u0), norm_h(g, d2.u0));
    const int K = t1.steps();
    std::vector<double> fdist(static_cast<size_t>(K), 0.0);
    for (int k = 1; k <= K; ++k) {
        const double a = t1.times[static_cast<size_t>(k) - 1];
        const double b = t1.times[static_cast<size_t>(k)];
        const NodalVector f1 = sample_forcing(g, d1.forcing, a, b, cfg.forcing_point_sample);
        const NodalVector f2 = sample_forcing(g, d2.forcing, a, b, cfg.forcing_point_sample);
        for (size_t i = 0; i < diff.size(); ++i) diff[i] = f1[i] - f2[i];
        fdist[static_cast<size_t>(k) - 1] = norm_h(g, diff);
        scale = std::max({scale, norm_h(g, f1), norm_h(g, f2)});
    }
    const double eps = 1e-8 * (1.0 + scale);

    DependenceReport rep;
    rep.min_margin = std::numeric_limits<double>::infinity();
    Ksum accumulated;
    for (int k = 0; k <= K; ++k) {
        if (k > 0) accumulated.add(cfg.dt * fdist[static_cast<size_t>(k) - 1]);
        for (size_t i = 0; i < diff.size(); ++i)
            diff[i] = t1.states[static_cast<size_t>(k)][i] - t2.states[static_cast<size_t>(k)][i];
        const double lhs = norm_h(g, diff);
        const double rhs = base + accumulated.value() + eps;
        const double margin = rhs - lhs;
        rep.min_margin = std::min(rep.min_margin, margin);
        if (margin < 0.0 && rep.ok) {
            rep.ok = false;
            rep.first_violation = k;
        }
        rep.max_excess = std::max(rep.max_excess, -margin);
    }
    if (rep.ok) rep.max_excess = 0.0;
    return rep;
}

}  // namespace fracflow
