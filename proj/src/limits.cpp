#include "fracflow/limits.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

#include "fracflow/vnorm.hpp"

namespace fracflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFeasibleShrink = 1.0 - 1e-8;

NodalVector averaged_forcing(const Grid& g, const Forcing& f, double t0, double t1, bool point) {
    NodalVector out(static_cast<size_t>(g.size()), 0.0);
    if (point)
        f.eval(g, t1, out);
    else
        f.eval_mean(g, t0, t1, out);
    return out;
}

ProblemData stage_data(const ProblemData& data, size_t j) {
    ProblemData d;
    d.T = data.T;
    d.forcing = data.forcing_stages.empty() ? data.forcing : data.forcing_stages[j];
    d.u0 = data.u0_stages.empty() ? data.u0 : data.u0_stages[j];
    return d;
}

void require_schedule(const ExponentSequence& seq, ExponentSequence::Mode mode, double eps_to_one,
                      const std::string& who) {
    const char* want = mode == ExponentSequence::Mode::Full ? "full" : "partial";
    if (seq.mode != mode) throw ConfigError(who + ": schedule mode must be " + want);
    if (seq.stages.empty()) throw ConfigError(who + ": schedule has no stages");
    const auto checks = validate_sequence(seq, eps_to_one);
    for (const NamedCheck& c : checks)
        if (!c.pass) throw ConfigError(who + ": schedule rejected: " + c.name + " (" + c.detail + ")");
}

void require_override_sizes(const ProblemData& data, size_t stages, const std::string& who) {
    if (!data.u0_stages.empty() && data.u0_stages.size() != stages)
        throw ConfigError(who + ": per-stage initial states do not match the schedule length");
    if (!data.forcing_stages.empty() && data.forcing_stages.size() != stages)
        throw ConfigError(who + ": per-stage forcings do not match the schedule length");
}

/// Runs work(0..count-1), fanning out over threads when asked. Results land
/// in caller-preallocated slots, so the outcome is identical either way; the
/// per-stage exception (if any) is returned in the stage's slot.
std::vector<std::exception_ptr> for_each_stage(int count, int threads,
                                               const std::function<void(int)>& work) {
    std::vector<std::exception_ptr> errors(static_cast<size_t>(count));
    auto guarded = [&](int j) {
        try {
            work(j);
        } catch (...) {
            errors[static_cast<size_t>(j)] = std::current_exception();
        }
    };
    if (threads <= 1 || count <= 1) {
        for (int j = 0; j < count; ++j) guarded(j);
        return errors;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, count);
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int j = next.fetch_add(1); j < count; j = next.fetch_add(1)) guarded(j);
        });
    for (std::thread& th : pool) th.join();
    return errors;
}

struct PathMetrics {
    double sup = 0.0;
    double sqrt_t = 0.0;
    double w12 = 0.0;
    double energy = 0.0;
};

/// Distances between two trajectories stored on the same time lattice. When
/// a complement functional is given, also integrates its modular of the
/// difference over time (right-endpoint rule, like the other sums).
PathMetrics path_distance(const Grid& g, const Trajectory& a, const Trajectory& b,
                          const FunctionalSpec* complement) {
    PathMetrics m;
    const size_t n = a.states.front().size();
    NodalVector d(n);
    Ksum sq_t, sq, en;
    for (size_t k = 0; k < a.states.size(); ++k) {
        for (size_t i = 0; i < n; ++i) d[i] = a.states[k][i] - b.states[k][i];
        m.sup = std::max(m.sup, norm_h(g, d));
        if (complement && k >= 1) {
            const double dt = a.times[k] - a.times[k - 1];
            const EvalResult e = eval_smooth_part(*complement, d, a.times[k]);
            if (e.overflow) {
                m.energy = std::numeric_limits<double>::infinity();
                complement = nullptr;
            } else {
                en.add(dt * e.value);
            }
        }
    }
    for (int k = 0; k + 1 < static_cast<int>(a.times.size()); ++k) {
        const size_t kk = static_cast<size_t>(k);
        const double dt = a.times[kk + 1] - a.times[kk];
        const NodalVector da = step_derivative(a, k);
        const NodalVector db = step_derivative(b, k);
        for (size_t i = 0; i < n; ++i) d[i] = da[i] - db[i];
        const double nd = norm_h(g, d);
        sq_t.add(dt * a.times[kk + 1] * nd * nd);
        sq.add(dt * nd * nd);
    }
    m.sqrt_t = std::sqrt(std::max(0.0, sq_t.value()));
    m.w12 = std::sqrt(std::max(0.0, sq.value()));
    if (!std::isinf(m.energy)) m.energy = std::sqrt(std::max(0.0, en.value()));
    return m;
}

/// Membership and variational-inequality certificates along a constrained
/// limit trajectory.
void indicator_diagnostics(const FunctionalSpec& limit_spec, const Trajectory& traj,
                           const ProblemData& data, const LimitsConfig& cfg, LimitDiagnostics& diag) {
    const Grid& g = *limit_spec.grid;
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const MembershipReport rep =
            membership(constraint_set(limit_spec, traj.times[k]), traj.states[k], cfg.membership_tol);
        diag.membership_worst = std::max(diag.membership_worst, rep.worst);
        diag.membership_ok = diag.membership_ok && rep.ok;
    }
    Rng rng = Rng(cfg.seed).fork("limit-vi");
    for (int k = 1; k <= traj.steps(); ++k) {
        const size_t kk = static_cast<size_t>(k);
        const double t0 = traj.times[kk - 1], t1 = traj.times[kk];
        const NodalVector f = averaged_forcing(g, data.forcing, t0, t1, cfg.step.forcing_point_sample);
        NodalVector w(f.size());
        for (size_t i = 0; i < w.size(); ++i)
            w[i] = f[i] - (traj.states[kk][i] - traj.states[kk - 1][i]) / (t1 - t0);
        const double r = vi_residual(limit_spec, constraint_set(limit_spec, t1), traj.states[kk], w, t1,
                                     cfg.vi_samples, rng, cfg.vi_perturbation, cfg.membership_tol);
        diag.vi_worst = std::max(diag.vi_worst, r);
    }
}

/// Mixed-limit certificates: interior slab margins, the discrete equation
/// residual on nodes outside the subdomain, and the quasi-variational
/// residual against the set anchored at the current outside values.
void mixed_diagnostics(const FunctionalSpec& mixed, const Trajectory& traj, const ProblemData& data,
                       const LimitsConfig& cfg, LimitDiagnostics& diag) {
    const Grid& g = *mixed.grid;
    const PairTable& t = *mixed.pairs;
    const SubdomainMask& mask = mixed.mask();
    const ConstraintSet slabs = constraint_set(mixed, 0.0);

    diag.interior_margin_min = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const MembershipReport rep = membership(slabs, traj.states[k], cfg.membership_tol);
        diag.membership_worst = std::max(diag.membership_worst, rep.worst);
        diag.membership_ok = diag.membership_ok && rep.ok;
        diag.interior_margin_min = std::min(diag.interior_margin_min, constraint_margin(slabs, traj.states[k]));
    }

    Rng rng = Rng(cfg.seed).fork("limit-vi");
    NodalVector r(static_cast<size_t>(g.size()));
    for (int k = 1; k <= traj.steps(); ++k) {
        const size_t kk = static_cast<size_t>(k);
        const double t0 = traj.times[kk - 1], t1 = traj.times[kk];
        const NodalVector f = averaged_forcing(g, data.forcing, t0, t1, cfg.step.forcing_point_sample);
        const NodalVector& u = traj.states[kk];
        const NodalVector& u_prev = traj.states[kk - 1];
        const NodalVector gr = grad(mixed, u, t1);
        NodalVector w(f.size());
        for (int i = 0; i < g.size(); ++i) {
            const size_t ii = static_cast<size_t>(i);
            const double drift = (u[ii] - u_prev[ii]) / (t1 - t0);
            w[ii] = f[ii] - drift;
            r[ii] = mask.in(i) ? 0.0 : drift + gr[ii] / g.weight[ii] - f[ii];
        }
        diag.complement_residual = std::max(diag.complement_residual, norm_h(g, r));
        const ConstraintSet anchored = make_anchored_set(g, t, mask, u);
        const double q = vi_residual(mixed, anchored, u, w, t1, cfg.vi_samples, rng, cfg.vi_perturbation,
                                     cfg.membership_tol);
        diag.quasi_vi_worst = std::max(diag.quasi_vi_worst, q);
    }
}

/// Low-frequency random sine mixture; vanishes toward the box boundary.
NodalVector smooth_sample(const Grid& g, Rng& rng) {
    NodalVector u(static_cast<size_t>(g.size()), 0.0);
    const double lx = g.box[1] - g.box[0];
    const double ly = g.box[3] - g.box[2];
    for (int k = 1; k <= 3; ++k) {
        const double c = rng.uniform(-0.8, 0.8);
        for (int i = 0; i < g.size(); ++i) {
            const double x = (g.coord(i, 0) - g.box[0]) / lx;
            double v = std::sin(k * kPi * x);
            if (g.dim == 2) v *= std::sin(k * kPi * (g.coord(i, 1) - g.box[2]) / ly);
            u[static_cast<size_t>(i)] += c * v;
        }
    }
    return u;
}

NodalVector project_and_shrink(const ConstraintSet& cs, NodalVector u) {
    u = project(cs, u);
    for (double& x : u) x *= kFeasibleShrink;
    return u;
}

/// Interior pair slabs tightened like the full-mode recovery set, so the
/// interior modular of a member stays under the interior pair mass divided
/// by any exponent >= p_min.
ConstraintSet tightened_interior_set(const Grid& g, const PairTable& t, const SubdomainMask& mask,
                                     double p_min) {
    ConstraintSet cs = make_interior_slab_set(g, t, mask);
    for (PairSlab& s : cs.slabs)
        s.bound *= std::min(1.0, std::pow(t.dist(s.i, s.j), static_cast<double>(t.dim) / p_min));
    return cs;
}

double interior_pair_mass(const Grid& g, const SubdomainMask& mask) {
    Ksum acc;
    for (int i = 0; i < g.size(); ++i)
        for (int j = 0; j < g.size(); ++j)
            if (i != j && mask.pair_interior(i, j))
                acc.add(g.weight[static_cast<size_t>(i)] * g.weight[static_cast<size_t>(j)]);
    return acc.value();
}

bool nonincreasing_sup(const std::vector<StageMetrics>& stages) {
    for (size_t j = 0; j + 1 < stages.size(); ++j) {
        if (!stages[j].solved || !stages[j + 1].solved) return false;
        if (stages[j + 1].sup_dist > stages[j].sup_dist + 1e-12) return false;
    }
    return !stages.empty() && stages.back().solved;
}

/// The derivative-metric hypothesis: the gap between the stage start energy
/// and its target must have shrunk under the tolerance by the last stage.
bool w12_trigger(const std::vector<double>& gaps, const std::vector<double>& targets, double tol) {
    if (gaps.empty()) return false;
    for (const double gap : gaps)
        if (!std::isfinite(gap)) return false;
    return gaps.back() <= tol * (1.0 + std::abs(targets.back()));
}

std::string failure_kind_of(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const DomainError*>(&e)) return "domain";
    if (dynamic_cast<const NonConvergenceError*>(&e)) return "non_convergence";
    if (dynamic_cast<const OverflowError*>(&e)) return "overflow";
    return "internal";
}

void record_first_failure(ConvergenceReport& rep, const std::vector<std::exception_ptr>& errors) {
    for (size_t j = 0; j < errors.size(); ++j) {
        if (!errors[j]) continue;
        rep.failed_stage = static_cast<int>(j);
        try {
            std::rethrow_exception(errors[j]);
        } catch (const std::exception& e) {
            rep.failure = "stage " + std::to_string(j) + ": " + e.what();
            rep.failure_kind = failure_kind_of(e);
        }
        return;
    }
}

}  // namespace

NodalVector sample_bounded_quotient_state(const Grid& g, const PairTable& t, double p_min, Rng& rng) {
    return project_and_shrink(make_recovery_set(g, t, p_min), smooth_sample(g, rng));
}

ConvergenceReport run_full_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                  const std::optional<WeightField>& weight, const ProblemData& data,
                                  const LimitsConfig& cfg) {
    require_schedule(seq, ExponentSequence::Mode::Full, cfg.eps_to_one, "run_full_blowup");
    require_override_sizes(data, seq.stages.size(), "run_full_blowup");
    if (weight)
        for (const ExponentField& stage : seq.stages)
            if (!stage.is_constant())
                throw ConfigError("run_full_blowup: the weighted flow needs one constant exponent per stage");

    ConvergenceReport rep;
    const FunctionalSpec limit_spec = weight ? make_indicator_kt(g, t, *weight) : make_indicator_kinf(g, t);
    try {
        rep.limit = solve_cauchy(limit_spec, data, cfg.step);
    } catch (const std::exception& e) {
        rep.failure = std::string("limit solve: ") + e.what();
        rep.failure_kind = failure_kind_of(e);
        return rep;
    }
    indicator_diagnostics(limit_spec, rep.limit, data, cfg, rep.diag);

    const int n = static_cast<int>(seq.stages.size());
    rep.stages.resize(static_cast<size_t>(n));
    const double mass = pair_mass(g);
    const auto errors = for_each_stage(n, cfg.threads, [&](int j) {
        const size_t jj = static_cast<size_t>(j);
        const ExponentField& stage = seq.stages[jj];
        const FunctionalSpec spec = weight ? make_weighted_constant_p(g, t, *weight, stage.constant_value())
                                           : make_variable_p(g, t, stage);
        Trajectory traj = solve_cauchy(spec, stage_data(data, jj), cfg.step);
        StageMetrics& m = rep.stages[jj];
        m.p_minus = stage.p_minus;
        const PathMetrics pm = path_distance(g, traj, rep.limit, nullptr);
        m.sup_dist = pm.sup;
        m.sqrt_t_w12_dist = pm.sqrt_t;
        m.w12_dist = pm.w12;
        m.energy_at_start = eval_guarded(spec, traj.states.front(), 0.0).value;
        m.recovery_margin = mass / m.p_minus - m.energy_at_start;
        m.traj = std::move(traj);
        m.solved = true;
    });
    record_first_failure(rep, errors);

    rep.sup_monotone = nonincreasing_sup(rep.stages);
    std::vector<double> gaps, targets;
    for (const StageMetrics& m : rep.stages) {
        if (!m.solved) break;
        gaps.push_back(std::abs(m.energy_at_start));
        targets.push_back(0.0);
    }
    rep.w12_triggered = gaps.size() == rep.stages.size() && w12_trigger(gaps, targets, cfg.w12_trigger_tol);
    return rep;
}

ConvergenceReport run_periodic_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                      const WeightField& weight, const ProblemData& data,
                                      const LimitsConfig& cfg) {
    require_schedule(seq, ExponentSequence::Mode::Full, cfg.eps_to_one, "run_periodic_blowup");
    require_override_sizes(data, seq.stages.size(), "run_periodic_blowup");
    for (const ExponentField& stage : seq.stages) {
        if (!stage.is_constant())
            throw ConfigError("run_periodic_blowup: every stage needs one constant exponent");
        if (stage.p_minus < 2.0)
            throw DomainError("run_periodic_blowup: every stage exponent must be at least 2");
    }
    for (const NamedCheck& c : validate_weight_for_period(weight))
        if (!c.pass) throw DomainError("run_periodic_blowup: weight fails the period gate: " + c.name);

    ConvergenceReport rep;
    const FunctionalSpec limit_spec = make_indicator_kt(g, t, weight);
    rep.limit = solve_periodic(limit_spec, data, cfg.step, cfg.periodic);
    indicator_diagnostics(limit_spec, rep.limit, data, cfg, rep.diag);

    const int n = static_cast<int>(seq.stages.size());
    rep.stages.resize(static_cast<size_t>(n));
    const double mass = pair_mass(g);
    const auto errors = for_each_stage(n, cfg.threads, [&](int j) {
        const size_t jj = static_cast<size_t>(j);
        const ExponentField& stage = seq.stages[jj];
        const FunctionalSpec spec = make_weighted_constant_p(g, t, weight, stage.constant_value());
        Trajectory traj = solve_periodic(spec, stage_data(data, jj), cfg.step, cfg.periodic);
        StageMetrics& m = rep.stages[jj];
        m.p_minus = stage.p_minus;
        const PathMetrics pm = path_distance(g, traj, rep.limit, nullptr);
        m.sup_dist = pm.sup;
        m.sqrt_t_w12_dist = pm.sqrt_t;
        m.w12_dist = pm.w12;
        m.energy_at_start = eval_guarded(spec, traj.states.front(), 0.0).value;
        m.recovery_margin = mass / m.p_minus - m.energy_at_start;
        m.traj = std::move(traj);
        m.solved = true;
    });
    for (const std::exception_ptr& err : errors)
        if (err) std::rethrow_exception(err);

    rep.sup_monotone = nonincreasing_sup(rep.stages);
    return rep;
}

ConvergenceReport run_partial_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                     const ProblemData& data, const LimitsConfig& cfg) {
    require_schedule(seq, ExponentSequence::Mode::Partial, cfg.eps_to_one, "run_partial_blowup");
    require_override_sizes(data, seq.stages.size(), "run_partial_blowup");

    ConvergenceReport rep;
    const FunctionalSpec limit_spec = make_mixed(g, t, seq.stages.front());
    rep.limit = solve_cauchy(limit_spec, data, cfg.step);
    mixed_diagnostics(limit_spec, rep.limit, data, cfg, rep.diag);

    const int n = static_cast<int>(seq.stages.size());
    rep.stages.resize(static_cast<size_t>(n));
    const double inner_mass = interior_pair_mass(g, limit_spec.mask());
    std::vector<double> gaps(static_cast<size_t>(n)), targets(static_cast<size_t>(n));
    const auto errors = for_each_stage(n, cfg.threads, [&](int j) {
        const size_t jj = static_cast<size_t>(j);
        const ExponentField& stage = seq.stages[jj];
        const FunctionalSpec spec = make_variable_p(g, t, stage);
        const ProblemData dj = stage_data(data, jj);
        Trajectory traj = solve_cauchy(spec, dj, cfg.step);
        StageMetrics& m = rep.stages[jj];
        m.p_minus = stage.inner_minus;
        const PathMetrics pm = path_distance(g, traj, rep.limit, &limit_spec);
        m.sup_dist = pm.sup;
        m.sqrt_t_w12_dist = pm.sqrt_t;
        m.w12_dist = pm.w12;
        m.energy_dist = pm.energy;
        m.energy_at_start = eval_guarded(spec, traj.states.front(), 0.0).value;
        const double complement_energy = eval_smooth_part(limit_spec, traj.states.front(), 0.0).value;
        m.recovery_margin = inner_mass / stage.inner_minus - (m.energy_at_start - complement_energy);
        gaps[jj] = std::abs(m.energy_at_start - complement_energy);
        targets[jj] = complement_energy;
        m.traj = std::move(traj);
        m.solved = true;
    });
    for (const std::exception_ptr& err : errors)
        if (err) std::rethrow_exception(err);

    rep.sup_monotone = nonincreasing_sup(rep.stages);
    rep.w12_triggered = w12_trigger(gaps, targets, cfg.w12_trigger_tol);
    return rep;
}

MoscoReport mosco_diagnostics(const Grid& g, const PairTable& t, const ExponentSequence& seq, int samples,
                              const LimitsConfig& cfg) {
    const bool partial = seq.mode == ExponentSequence::Mode::Partial;
    require_schedule(seq, seq.mode, cfg.eps_to_one, "mosco_diagnostics");
    if (samples < 1) throw ConfigError("mosco_diagnostics: at least one sample required");

    const int n = static_cast<int>(seq.stages.size());
    std::vector<FunctionalSpec> stage_specs;
    stage_specs.reserve(static_cast<size_t>(n));
    for (const ExponentField& stage : seq.stages) stage_specs.push_back(make_variable_p(g, t, stage));

    FunctionalSpec mixed;  // partial mode only: the limit functional
    double p_min = seq.stages.front().p_minus;
    ConstraintSet feasible;
    if (partial) {
        mixed = make_mixed(g, t, seq.stages.front());
        p_min = seq.stages.front().inner_minus;
        feasible = tightened_interior_set(g, t, mixed.mask(), p_min);
    } else {
        feasible = make_recovery_set(g, t, p_min);
    }
    const double mass = partial ? interior_pair_mass(g, mixed.mask()) : pair_mass(g);
    auto stage_excess = [&](int j, const NodalVector& u) {
        const double value = eval_guarded(stage_specs[static_cast<size_t>(j)], u, 0.0).value;
        if (!partial) return value;
        return value - eval_smooth_part(mixed, u, 0.0).value;
    };

    MoscoReport rep;
    Rng recovery_rng = Rng(cfg.seed).fork("mosco-recovery");
    rep.recovery.resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        rep.recovery[static_cast<size_t>(j)].p_minus =
            partial ? seq.stages[static_cast<size_t>(j)].inner_minus : seq.stages[static_cast<size_t>(j)].p_minus;
        rep.recovery[static_cast<size_t>(j)].bound = mass / rep.recovery[static_cast<size_t>(j)].p_minus;
    }
    for (int s = 0; s < samples; ++s) {
        const NodalVector u = project_and_shrink(feasible, smooth_sample(g, recovery_rng));
        for (int j = 0; j < n; ++j) {
            RecoveryProbe& probe = rep.recovery[static_cast<size_t>(j)];
            probe.worst_value = std::max(probe.worst_value, stage_excess(j, u));
        }
    }

    Rng liminf_rng = Rng(cfg.seed).fork("mosco-liminf");
    const NodalVector base = project_and_shrink(feasible, smooth_sample(g, liminf_rng));
    rep.limit_value = partial ? eval_smooth_part(mixed, base, 0.0).value : 0.0;
    rep.liminf.resize(static_cast<size_t>(n));
    double tail = std::numeric_limits<double>::infinity();
    bool tail_finite = true;
    for (int j = 0; j < n; ++j) {
        NodalVector w(static_cast<size_t>(g.size()));
        for (double& x : w) x = liminf_rng.normal();
        const double nw = norm_h(g, w);
        const double delta = cfg.liminf_delta0 * std::pow(0.5, j);
        const double coef = delta / (nw > 0.0 ? nw : 1.0);
        NodalVector uj = base;
        for (size_t i = 0; i < uj.size(); ++i) uj[i] += coef * w[i];
        const EvalResult e = eval_guarded(stage_specs[static_cast<size_t>(j)], uj, 0.0);
        LiminfProbe& probe = rep.liminf[static_cast<size_t>(j)];
        probe.delta = delta;  // the perturbation's h-norm
        probe.value = e.value;
        probe.finite = !e.overflow;
        if (j >= n / 2) {
            tail_finite = tail_finite && probe.finite;
            tail = std::min(tail, probe.value);
        }
    }
    rep.liminf_tail = tail;
    rep.liminf_ok = tail_finite && tail >= rep.limit_value - cfg.liminf_tol;

    Rng bad_rng = Rng(cfg.seed).fork("mosco-infeasible");
    NodalVector bad = smooth_sample(g, bad_rng);
    double worst_q = 0.0;
    for (int i = 0; i < g.size(); ++i)
        for (int j = i + 1; j < g.size(); ++j) {
            if (partial && !mixed.mask().pair_interior(i, j)) continue;
            worst_q = std::max(worst_q, std::abs(bad[static_cast<size_t>(i)] - bad[static_cast<size_t>(j)]) /
                                            t.dist_pow_s(i, j));
        }
    if (worst_q > 0.0)
        for (double& x : bad) x *= 1.5 / worst_q;
    rep.infeasible_values.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const EvalResult e = eval_guarded(stage_specs[static_cast<size_t>(j)], bad, 0.0);
        rep.infeasible_values.push_back(e.value);
        if (e.overflow) rep.infeasible_diverged = true;
    }
    if (!rep.infeasible_values.empty() && rep.infeasible_values.back() >= cfg.divergence_threshold)
        rep.infeasible_diverged = true;
    return rep;
}

}  // namespace fracflow
