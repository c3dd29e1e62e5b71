#pragma once

#include "fracflow/energy.hpp"

namespace fracflow {

/// Uniform implicit time stepping knobs. The inner method is chosen by the
/// functional kind: descent with backtracking for smooth kinds, one exact
/// projection for indicator kinds, projected descent for the mixed kind.
struct StepConfig {
    double dt = 1.0 / 64.0;
    double inner_tol = 1e-8;
    int inner_max_iter = 5000;
    bool forcing_point_sample = false;  // sample f at the step's right endpoint instead of averaging
    double proj_tol = 1e-10;
    long proj_max = -1;  // forwarded to project(); < 0 keeps its default
};

struct StepStats {
    int inner_iterations = 0;
    int backtracks = 0;
    double residual = 0.0;  // weighted-norm optimality residual at acceptance
    long projection_sweeps = 0;
};

/// One accepted implicit step.
struct StepResult {
    NodalVector u;
    StepStats stats;
};

/// Discrete evolution record: states at t_k = k dt, the energy value at each
/// node, and per-step solver statistics (stats[k] produced states[k + 1]).
struct Trajectory {
    std::vector<double> times;
    std::vector<NodalVector> states;
    std::vector<double> energies;
    std::vector<StepStats> stats;

    int steps() const { return static_cast<int>(stats.size()); }
    const NodalVector& back() const { return states.back(); }
};

/// (u^{k+1} - u^k) / dt ahead of node k.
NodalVector step_derivative(const Trajectory& traj, int k);

/// Minimizer of v -> ||v - u_prev||_h^2 / (2 dt) + eval(spec, v, t_next)
/// - <f_avg, v>_h. Smooth kinds terminate when the weighted gradient norm of
/// the objective falls under inner_tol (1 + ||f_avg||_h); indicator kinds
/// project u_prev + dt f_avg in one shot; the mixed kind runs projected
/// descent with the same certificate measured through the projection map.
StepResult implicit_step(const FunctionalSpec& spec, const NodalVector& u_prev, double t_next,
                         const NodalVector& f_avg, const StepConfig& cfg);

/// March data.u0 over [0, data.T] in uniform steps. Constrained kinds first
/// project u0 onto their feasible set at time zero.
Trajectory solve_cauchy(const FunctionalSpec& spec, const ProblemData& data, const StepConfig& cfg);

struct PeriodicConfig {
    double fp_tol = 1e-10;
    int fp_max_iter = 200;
    int stall_window = 8;    // consecutive non-improving sweeps tolerated
    bool averaging = false;  // damp the return map on stall instead of aborting
};

struct PeriodicReport {
    int iterations = 0;
    double gap = 0.0;  // ||u(T) - u(0)||_h of the returned trajectory
    bool converged = false;
    bool used_averaging = false;
    std::vector<double> gaps;
};

/// Periodic orbit by fixed-point iteration of the period-end map starting
/// from zero. Requires every exponent >= 2, a weight whose period gate
/// passes, and forcing whose weighted mean over the period vanishes (the
/// flow conserves <u, 1>_h up to forcing, so a pumped mean admits no
/// periodic solution). Stalls abort with a diagnostic unless averaging is on.
Trajectory solve_periodic(const FunctionalSpec& spec, const ProblemData& data, const StepConfig& cfg,
                          const PeriodicConfig& pcfg, PeriodicReport* report = nullptr);

struct DependenceReport {
    bool ok = true;
    int first_violation = -1;  // earliest time index breaking the bound
    double max_excess = 0.0;   // worst (distance - bound), 0 when ok
    double min_margin = 0.0;   // smallest (bound - distance) over the horizon
};

/// Two runs of the same functional: at every step the state distance must
/// stay under the initial distance plus the accumulated forcing distance,
/// with slack 1e-8 (1 + data scale).
DependenceReport continuous_dependence_check(const FunctionalSpec& spec, const ProblemData& d1,
                                             const ProblemData& d2, const StepConfig& cfg);

}  // namespace fracflow
