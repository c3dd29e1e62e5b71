#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fracflow/flow.hpp"

using namespace fracflow;

namespace {

NodalVector random_state(Rng& rng, int n, double scale) {
    NodalVector u(static_cast<size_t>(n));
    for (double& x : u) x = scale * rng.normal();
    return u;
}

Forcing sample_forcing(NodalVector values, TimeProfile time) {
    Forcing f;
    f.terms.push_back({1.0, space_samples(std::move(values)), std::move(time)});
    return f;
}

/// Two interior midpoints of [0, L]: equal weights L/2, distance L/2. With
/// s = 1/2 the quadratic flow u' = -L_h u has the single decay rate
/// lambda = 8 / L on the mean-free component.
struct TwoNode {
    Grid g;
    PairTable t;
    double c = 0.0;  // per-node coupling 2 mu / (h d^{2s})

    explicit TwoNode(double length) : g(build_interval_grid(2, 0.0, length)), t(build_pair_table(g, 0.5)) {
        c = 2.0 * t.mu(0, 1) / (g.weight[0] * t.dist(0, 1));
    }

    /// Exact implicit step for p = 2: (I + dt L_h) u = u_prev + dt f.
    NodalVector implicit_oracle(const NodalVector& u_prev, double dt, const NodalVector& f) const {
        const double a = 1.0 + dt * c;
        const double b = -dt * c;
        const double det = a * a - b * b;
        const double r0 = u_prev[0] + dt * f[0];
        const double r1 = u_prev[1] + dt * f[1];
        return {(a * r0 - b * r1) / det, (a * r1 - b * r0) / det};
    }

    /// Exact flow value at time T for f = 0.
    NodalVector exp_oracle(const NodalVector& u0, double T) const {
        const double mean = 0.5 * (u0[0] + u0[1]);  // equal weights
        const double w = 0.5 * (u0[0] - u0[1]);
        const double decay = std::exp(-2.0 * c * T);
        return {mean + decay * w, mean - decay * w};
    }
};

/// Stationary state of the variable-exponent flow under constant forcing:
/// plain descent on eval(u) - <f, u>_h down to gradient norm `tol`. Kept
/// independent of the stepping module on purpose.
NodalVector stationary_oracle(const FunctionalSpec& spec, const NodalVector& f, double tol) {
    const Grid& g = *spec.grid;
    NodalVector u(static_cast<size_t>(g.size()), 0.0);
    double step = 1.0;
    for (int it = 0; it < 200000; ++it) {
        const NodalVector gr = grad(spec, u, 0.0);
        NodalVector dir(u.size());
        for (size_t i = 0; i < u.size(); ++i) dir[i] = gr[i] / g.weight[i] - f[i];
        const double gn = norm_h(g, dir);
        if (gn <= tol) return u;
        const double f0 = eval(spec, u, 0.0).value - dot_h(g, f, u);
        const double f_noise = 64.0 * 2.2e-16 * (1.0 + std::abs(f0));
        double beta = step;
        while (true) {
            NodalVector trial(u.size());
            for (size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - beta * dir[i];
            const double ft = eval(spec, trial, 0.0).value - dot_h(g, f, trial);
            bool accept = ft <= f0 - 1e-4 * beta * gn * gn;
            if (!accept && 1e-4 * beta * gn * gn <= f_noise && ft <= f0 + f_noise) {
                // objective differences are sub-rounding; fall back to gradient progress
                const NodalVector gt = grad(spec, trial, 0.0);
                NodalVector dt(u.size());
                for (size_t i = 0; i < u.size(); ++i) dt[i] = gt[i] / g.weight[i] - f[i];
                accept = norm_h(g, dt) <= 0.999 * gn;
            }
            if (accept) {
                u = std::move(trial);
                step = 2.0 * beta;
                break;
            }
            beta *= 0.5;
            REQUIRE(beta > 1e-20);
        }
    }
    FAIL("stationary oracle did not converge");
    return u;
}

}  // namespace

TEST_CASE("implicit steps match the two-node linear solve") {
    const TwoNode net(8.0);
    const auto spec = make_weighted_constant_p(net.g, net.t, make_unit_weight(2, 1.0), 2.0);
    StepConfig cfg;
    cfg.dt = 0.1;
    cfg.inner_tol = 1e-12;

    const NodalVector u_prev{1.0, -0.5};
    const NodalVector f{0.3, -0.7};
    const NodalVector expect = net.implicit_oracle(u_prev, cfg.dt, f);
    const StepResult res = implicit_step(spec, u_prev, cfg.dt, f, cfg);

    const double slack = 10.0 * cfg.dt * cfg.inner_tol * (1.0 + norm_h(net.g, f));
    CHECK(std::abs(res.u[0] - expect[0]) <= slack);
    CHECK(std::abs(res.u[1] - expect[1]) <= slack);
    CHECK(res.stats.residual <= cfg.inner_tol * (1.0 + norm_h(net.g, f)));
}

TEST_CASE("cauchy marching reproduces the per-step linear solves with averaged forcing") {
    const TwoNode net(8.0);
    const auto spec = make_weighted_constant_p(net.g, net.t, make_unit_weight(2, 1.0), 2.0);
    StepConfig cfg;
    cfg.dt = 0.25;
    cfg.inner_tol = 1e-12;

    ProblemData data;
    data.T = 1.0;
    data.u0 = {0.4, -1.2};
    data.forcing = sample_forcing({1.0, -2.0}, time_affine(0.5, 1.0));

    const Trajectory traj = solve_cauchy(spec, data, cfg);
    REQUIRE(traj.steps() == 4);
    REQUIRE(traj.times.size() == 5);
    CHECK(traj.times[0] == 0.0);
    CHECK(traj.times[4] == doctest::Approx(1.0));
    CHECK(traj.states[0][0] == 0.4);  // unconstrained kinds keep u0 bitwise

    NodalVector u = data.u0;
    for (int k = 1; k <= 4; ++k) {
        const double t0 = (k - 1) * cfg.dt, t1 = k * cfg.dt;
        NodalVector f(2);
        data.forcing.eval_mean(net.g, t0, t1, f);
        u = net.implicit_oracle(u, cfg.dt, f);
        CHECK(std::abs(traj.states[static_cast<size_t>(k)][0] - u[0]) <= 1e-10);
        CHECK(std::abs(traj.states[static_cast<size_t>(k)][1] - u[1]) <= 1e-10);
    }
}

TEST_CASE("point-sampled forcing uses the right endpoint") {
    const TwoNode net(8.0);
    const auto spec = make_weighted_constant_p(net.g, net.t, make_unit_weight(2, 1.0), 2.0);
    StepConfig cfg;
    cfg.dt = 0.25;
    cfg.inner_tol = 1e-12;
    cfg.forcing_point_sample = true;

    ProblemData data;
    data.T = 0.25;
    data.u0 = {0.0, 0.0};
    data.forcing = sample_forcing({1.0, 1.0}, time_affine(0.0, 4.0));

    const Trajectory traj = solve_cauchy(spec, data, cfg);
    NodalVector f(2);
    data.forcing.eval(net.g, 0.25, f);  // f(t_1) = 1, mean over the step would be 1/2
    const NodalVector expect = net.implicit_oracle(data.u0, cfg.dt, f);
    CHECK(std::abs(traj.back()[0] - expect[0]) <= 1e-10);
    CHECK(std::abs(traj.back()[1] - expect[1]) <= 1e-10);
}

TEST_CASE("implicit Euler converges at first order against the exact flow") {
    const TwoNode net(8.0);
    const auto spec = make_weighted_constant_p(net.g, net.t, make_unit_weight(2, 1.0), 2.0);
    ProblemData data;
    data.T = 1.0;
    data.u0 = {1.0, -1.0};

    const NodalVector exact = net.exp_oracle(data.u0, data.T);
    std::vector<double> errs;
    for (const double dt : {1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0}) {
        StepConfig cfg;
        cfg.dt = dt;
        cfg.inner_tol = 1e-12;
        const Trajectory traj = solve_cauchy(spec, data, cfg);
        NodalVector d(2);
        for (size_t i = 0; i < 2; ++i) d[i] = traj.back()[i] - exact[i];
        errs.push_back(norm_h(net.g, d));
    }
    for (size_t k = 0; k + 1 < errs.size(); ++k) {
        const double ratio = errs[k] / errs[k + 1];
        CHECK(ratio >= 1.7);
        CHECK(ratio <= 2.3);
    }
}

TEST_CASE("constants are stationary for every functional kind") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const SubdomainMask mask = build_mask(g, {0.25, 0.75, 0.0, 0.0});
    const auto w = make_unit_weight(8, 1.0);

    std::vector<FunctionalSpec> specs;
    specs.push_back(make_weighted_constant_p(g, t, w, 3.0));
    specs.push_back(make_variable_p(g, t, make_constant_exponent(8, 2.5)));
    specs.push_back(make_indicator_kt(g, t, w));
    specs.push_back(make_indicator_kinf(g, t));
    specs.push_back(make_mixed(g, t, make_partial_exponent(mask, PairMatrix(8, 2.0), PairMatrix(8, 4.0))));

    const NodalVector u_prev(8, 0.37);
    const NodalVector f(8, 0.0);
    StepConfig cfg;
    cfg.dt = 1.0 / 16.0;
    for (const auto& spec : specs) {
        const StepResult res = implicit_step(spec, u_prev, cfg.dt, f, cfg);
        for (size_t i = 0; i < 8; ++i) CHECK(res.u[i] == 0.37);
    }
}

TEST_CASE("steps conserve the weighted mean up to forcing") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const NodalVector ones(8, 1.0);
    Rng rng(42);

    ProblemData data;
    data.T = 0.5;
    data.u0 = random_state(rng, 8, 0.4);
    data.forcing = sample_forcing({1.0, 0.5, -0.25, 2.0, 1.0, 1.0, 0.0, 0.5}, time_affine(1.0, 0.5));
    StepConfig cfg;
    cfg.dt = 1.0 / 16.0;

    for (const auto& spec : {make_variable_p(g, t, make_constant_exponent(8, 3.0)), make_indicator_kinf(g, t)}) {
        const Trajectory traj = solve_cauchy(spec, data, cfg);
        Ksum pumped;
        for (int k = 1; k <= traj.steps(); ++k) {
            NodalVector f(8);
            data.forcing.eval_mean(g, traj.times[static_cast<size_t>(k) - 1], traj.times[static_cast<size_t>(k)], f);
            pumped.add(cfg.dt * dot_h(g, f, ones));
        }
        const double start = dot_h(g, traj.states.front(), ones);
        const double end = dot_h(g, traj.back(), ones);
        CHECK(std::abs(end - start - pumped.value()) <= 1e-7);
    }
}

TEST_CASE("the optimality certificate holds at the returned state") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    PairMatrix p(8, 2.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) p(i, j) = 2.0 + 0.5 * (g.coord(i, 0) + g.coord(j, 0));
    const auto spec = make_variable_p(g, t, make_tabulated_exponent(p));

    Rng rng(7);
    const NodalVector u_prev = random_state(rng, 8, 0.6);
    const NodalVector f = random_state(rng, 8, 0.8);
    StepConfig cfg;
    cfg.dt = 1.0 / 32.0;
    const StepResult res = implicit_step(spec, u_prev, cfg.dt, f, cfg);

    const NodalVector gr = grad(spec, res.u, cfg.dt);
    NodalVector r(8);
    for (size_t i = 0; i < 8; ++i)
        r[i] = (res.u[i] - u_prev[i]) / cfg.dt + gr[i] / g.weight[i] - f[i];
    CHECK(norm_h(g, r) <= cfg.inner_tol * (1.0 + norm_h(g, f)));
    CHECK(res.stats.inner_iterations >= 1);
}

TEST_CASE("energies dissipate along unforced trajectories") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const SubdomainMask mask = build_mask(g, {0.25, 0.75, 0.0, 0.0});
    Rng rng(11);

    ProblemData data;
    data.T = 0.5;
    data.u0 = random_state(rng, 8, 0.5);
    StepConfig cfg;
    cfg.dt = 1.0 / 32.0;

    std::vector<FunctionalSpec> specs;
    specs.push_back(make_variable_p(g, t, make_constant_exponent(8, 3.0)));
    specs.push_back(make_mixed(g, t, make_partial_exponent(mask, PairMatrix(8, 2.0), PairMatrix(8, 4.0))));
    for (const auto& spec : specs) {
        const Trajectory traj = solve_cauchy(spec, data, cfg);
        for (size_t k = 0; k + 1 < traj.energies.size(); ++k)
            CHECK(traj.energies[k + 1] <= traj.energies[k] + cfg.inner_tol);
        CHECK(traj.energies.back() < traj.energies.front());
    }
}

TEST_CASE("feasible targets pass through the constrained step unchanged") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const auto spec = make_indicator_kinf(g, t);

    const NodalVector u_prev(8, 0.0);
    const NodalVector f(8, 0.125);  // constant shift keeps every pair difference at zero
    StepConfig cfg;
    cfg.dt = 1.0 / 16.0;
    const StepResult res = implicit_step(spec, u_prev, cfg.dt, f, cfg);
    for (size_t i = 0; i < 8; ++i) CHECK(res.u[i] == u_prev[i] + cfg.dt * f[i]);
    CHECK(res.stats.projection_sweeps == 0);
}

TEST_CASE("constrained marching projects the initial state and tracks the shrinking set") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const auto w = make_weight(PairMatrix(8, 1.0), time_affine(1.0, 1.0), 2.0, 1.0);
    const auto spec = make_indicator_kt(g, t, w);

    Rng rng(3);
    ProblemData data;
    data.T = 1.0;
    data.u0 = random_state(rng, 8, 3.0);  // far outside the feasible set
    StepConfig cfg;
    cfg.dt = 1.0 / 8.0;

    const Trajectory traj = solve_cauchy(spec, data, cfg);
    bool moved = false;
    for (size_t i = 0; i < 8; ++i) moved = moved || traj.states[0][i] != data.u0[i];
    CHECK(moved);
    for (int k = 0; k <= traj.steps(); ++k) {
        const auto cs = make_kt_set(g, t, w, traj.times[static_cast<size_t>(k)]);
        CHECK(membership(cs, traj.states[static_cast<size_t>(k)], 1e-8).ok);
    }
}

TEST_CASE("stepping rejects malformed configuration") {
    const TwoNode net(8.0);
    const auto spec = make_weighted_constant_p(net.g, net.t, make_unit_weight(2, 1.0), 2.0);
    StepConfig cfg;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(implicit_step(spec, {0.0, 0.0}, 0.1, {0.0, 0.0}, cfg), ConfigError);
    cfg.dt = 0.1;
    CHECK_THROWS_AS(implicit_step(spec, {0.0, 0.0}, 0.1, {0.0}, cfg), DomainError);

    ProblemData data;
    data.T = 1.0;
    data.u0 = {0.0, 0.0};
    cfg.dt = 0.3;  // does not divide T
    CHECK_THROWS_AS(solve_cauchy(spec, data, cfg), ConfigError);
    cfg.dt = 0.25;
    data.T = -1.0;
    CHECK_THROWS_AS(solve_cauchy(spec, data, cfg), ConfigError);
    data.T = 1.0;
    data.u0 = {0.0};
    CHECK_THROWS_AS(solve_cauchy(spec, data, cfg), ConfigError);
}

TEST_CASE("zero forcing yields the zero periodic orbit immediately") {
    const Grid g = build_interval_grid(6, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    Rng rng(5);
    ProblemData data;
    data.T = 0.5;
    data.u0 = random_state(rng, 6, 1.0);  // periodic solves ignore u0 and start from zero

    StepConfig cfg;
    cfg.dt = 1.0 / 8.0;
    PeriodicConfig pcfg;
    for (const double p : {2.0, 4.0, 8.0}) {
        const auto spec = make_weighted_constant_p(g, t, make_unit_weight(6, 0.5), p);
        PeriodicReport rep;
        const Trajectory traj = solve_periodic(spec, data, cfg, pcfg, &rep);
        CHECK(rep.converged);
        CHECK(rep.iterations <= 3);
        for (const auto& state : traj.states)
            for (const double x : state) CHECK(x == 0.0);
    }
}

TEST_CASE("time-constant forcing produces the stationary periodic orbit") {
    const Grid g = build_interval_grid(6, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const auto spec = make_variable_p(g, t, make_constant_exponent(6, 3.0));

    const NodalVector fvals{1.0, -1.0, 2.0, -2.0, 0.5, -0.5};  // zero weighted mean on equal cells
    ProblemData data;
    data.T = 1.0;
    data.u0.assign(6, 0.0);
    data.forcing = sample_forcing(fvals, time_one());

    StepConfig cfg;
    cfg.dt = 1.0 / 8.0;
    cfg.inner_tol = 1e-12;
    PeriodicConfig pcfg;
    PeriodicReport rep;
    const Trajectory traj = solve_periodic(spec, data, cfg, pcfg, &rep);
    REQUIRE(rep.converged);
    CHECK(rep.gap <= pcfg.fp_tol);

    const NodalVector star = stationary_oracle(spec, fvals, 1e-11);
    for (const auto& state : traj.states) {
        NodalVector d(6);
        for (size_t i = 0; i < 6; ++i) d[i] = state[i] - star[i];
        CHECK(norm_h(g, d) <= 1e-6);
    }
}

TEST_CASE("periodic gates reject unusable problems") {
    const Grid g = build_interval_grid(6, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    ProblemData data;
    data.T = 0.5;
    data.u0.assign(6, 0.0);
    StepConfig cfg;
    cfg.dt = 1.0 / 8.0;
    PeriodicConfig pcfg;

    // exponent below two
    const auto low = make_weighted_constant_p(g, t, make_unit_weight(6, 0.5), 1.5);
    CHECK_THROWS_AS(solve_periodic(low, data, cfg, pcfg), DomainError);

    // weight decreasing over the period
    const auto sinking = make_weight(PairMatrix(6, 1.0), time_affine(1.0, -0.5), 2.0, 0.5);
    const auto decay = make_weighted_constant_p(g, t, sinking, 2.0);
    CHECK_THROWS_AS(solve_periodic(decay, data, cfg, pcfg), DomainError);

    // forcing pumps the conserved mean
    const auto ok = make_weighted_constant_p(g, t, make_unit_weight(6, 0.5), 2.0);
    ProblemData pumped = data;
    pumped.forcing = sample_forcing(NodalVector(6, 1.0), time_one());
    CHECK_THROWS_AS(solve_periodic(ok, pumped, cfg, pcfg), ConfigError);

    // step does not divide the period
    StepConfig bad = cfg;
    bad.dt = 0.3;
    CHECK_THROWS_AS(solve_periodic(ok, data, bad, pcfg), ConfigError);
}

TEST_CASE("a stalled return map aborts, or averages first when allowed") {
    // Wide two-node geometry: cycle contraction ~ 0.9995, slower than the
    // 0.999 stall threshold, so the gap sequence plateaus by construction.
    const TwoNode net(2000.0);
    const auto spec = make_variable_p(net.g, net.t, make_constant_exponent(2, 2.0));

    ProblemData data;
    data.T = 0.125;
    data.u0.assign(2, 0.0);
    data.forcing = sample_forcing({1.0, -1.0}, time_one());
    StepConfig cfg;
    cfg.dt = 0.0625;
    cfg.inner_tol = 1e-12;

    PeriodicConfig pcfg;
    pcfg.fp_max_iter = 100;
    CHECK_THROWS_AS(solve_periodic(spec, data, cfg, pcfg), NonConvergenceError);

    pcfg.averaging = true;
    PeriodicReport rep;
    CHECK_THROWS_AS(solve_periodic(spec, data, cfg, pcfg, &rep), NonConvergenceError);
    CHECK(rep.used_averaging);
    CHECK(rep.iterations > pcfg.stall_window);
}

TEST_CASE("trajectories of nearby data stay within the dependence bound") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const auto spec = make_variable_p(g, t, make_constant_exponent(8, 3.0));
    StepConfig cfg;
    cfg.dt = 1.0 / 16.0;

    Rng rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        ProblemData d1, d2;
        d1.T = d2.T = 0.5;
        d1.u0 = random_state(rng, 8, 0.5);
        d2.u0 = random_state(rng, 8, 0.5);
        d1.forcing = sample_forcing(random_state(rng, 8, 0.5), time_affine(1.0, 0.3));
        d2.forcing = sample_forcing(random_state(rng, 8, 0.5), time_sin(0.5, 0.25, 3.0, 0.1));
        const DependenceReport rep = continuous_dependence_check(spec, d1, d2, cfg);
        CHECK(rep.ok);
        CHECK(rep.min_margin >= 0.0);
    }

    // identical data: zero distance everywhere
    ProblemData same;
    same.T = 0.5;
    same.u0 = random_state(rng, 8, 0.5);
    const DependenceReport rep = continuous_dependence_check(spec, same, same, cfg);
    CHECK(rep.ok);
    CHECK(rep.max_excess == 0.0);
}

TEST_CASE("step derivatives are forward differences") {
    Trajectory traj;
    traj.times = {0.0, 0.5, 1.0};
    traj.states = {{1.0, 2.0}, {2.0, 0.0}, {3.0, 1.0}};
    traj.stats.resize(2);
    const NodalVector d0 = step_derivative(traj, 0);
    CHECK(d0[0] == 2.0);
    CHECK(d0[1] == -4.0);
    const NodalVector d1 = step_derivative(traj, 1);
    CHECK(d1[0] == 2.0);
    CHECK(d1[1] == 2.0);
}
