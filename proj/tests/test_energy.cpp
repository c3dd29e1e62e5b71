#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fracflow/energy.hpp"
#include "fracflow/vnorm.hpp"

using namespace fracflow;

namespace {

/// Symmetric exponent p(i, j) = 2 + (x_i + x_j) / 2 on an interval grid.
ExponentField coordinate_exponent(const Grid& g) {
    PairMatrix p(g.size(), 2.0);
    for (int i = 0; i < g.size(); ++i)
        for (int j = 0; j < g.size(); ++j) p(i, j) = 2.0 + 0.5 * (g.coord(i, 0) + g.coord(j, 0));
    return make_tabulated_exponent(p);
}

NodalVector random_state(Rng& rng, int n, double scale) {
    NodalVector u(static_cast<size_t>(n));
    for (double& x : u) x = scale * rng.normal();
    return u;
}

/// Low-frequency sine mixture rescaled so its Holder quotient stays near cap.
NodalVector smooth_state(const Grid& g, const PairTable& t, Rng& rng, double cap) {
    NodalVector u(static_cast<size_t>(g.size()), 0.0);
    for (int k = 1; k <= 3; ++k) {
        const double c = rng.uniform(-0.8, 0.8);
        for (int i = 0; i < g.size(); ++i)
            u[static_cast<size_t>(i)] += c * std::sin(k * 3.14159265358979323846 * g.coord(i, 0));
    }
    const double hs = holder_sup(t, u);
    if (hs > cap)
        for (double& x : u) x *= cap / hs;
    return u;
}

double fd_partial(const FunctionalSpec& spec, NodalVector u, int i, double t) {
    const double step = 1e-5 * (1.0 + std::abs(u[static_cast<size_t>(i)]));
    u[static_cast<size_t>(i)] += step;
    const double plus = eval(spec, u, t).value;
    u[static_cast<size_t>(i)] -= 2.0 * step;
    const double minus = eval(spec, u, t).value;
    return (plus - minus) / (2.0 * step);
}

}  // namespace

TEST_CASE("energy of the two-node reference pair") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const NodalVector u{0.0, 1.0};

    const WeightField unit = make_unit_weight(2, 1.0);
    const EnergyValue e2 = eval(make_weighted_constant_p(g, t, unit, 2.0), u, 0.0);
    CHECK(e2.finite);
    CHECK(e2.value == doctest::Approx(1.0).epsilon(1e-13));
    const EnergyValue e4 = eval(make_weighted_constant_p(g, t, unit, 4.0), u, 0.0);
    CHECK(e4.value == doctest::Approx(1.0).epsilon(1e-13));

    PairMatrix a(2, 0.5);
    const WeightField w = make_weight(a, time_affine(1.0, 0.5), 1.0, 1.0);
    const EnergyValue ew = eval(make_weighted_constant_p(g, t, w, 2.0), u, 1.0);
    CHECK(ew.value == doctest::Approx(0.75).epsilon(1e-13));

    const EnergyValue ev = eval(make_variable_p(g, t, make_constant_exponent(2, 4.0)), u, 0.0);
    CHECK(ev.value == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("variable-exponent energy equals the modular scaled by the exponent") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const ExponentField p = make_constant_exponent(8, 3.5);
    const FunctionalSpec spec = make_variable_p(g, t, p);
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const NodalVector u = random_state(rng, 8, 0.7);
        const double direct = eval(spec, u, 0.0).value;
        CHECK(direct == doctest::Approx(modular(t, p, u) / 3.5).epsilon(1e-12));
    }
}

TEST_CASE("indicator energies flag violations instead of throwing") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec kinf = make_indicator_kinf(g, t);

    NodalVector inside{0.0, 0.5};
    const EnergyValue ok = eval(kinf, inside, 0.0);
    CHECK(ok.finite);
    CHECK(ok.value == 0.0);

    NodalVector outside{0.0, 1.0};
    const EnergyValue bad = eval(kinf, outside, 0.0);
    CHECK_FALSE(bad.finite);

    // Growing sigma tightens the weighted set over time: the same state is
    // admissible at t = 0 and excluded at t = 1.
    PairMatrix a(2, 1.0);
    const WeightField w = make_weight(a, time_affine(1.0, 1.0), 2.0, 1.0);
    const FunctionalSpec kt = make_indicator_kt(g, t, w);
    NodalVector between{0.0, 0.5};  // bounds: d^s = 0.707 at t=0, 0.354 at t=1
    CHECK(eval(kt, between, 0.0).finite);
    CHECK_FALSE(eval(kt, between, 1.0).finite);
}

TEST_CASE("gradient of the two-node reference pair") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const WeightField unit = make_unit_weight(2, 1.0);
    const FunctionalSpec spec = make_weighted_constant_p(g, t, unit, 2.0);
    const NodalVector grad_ref = grad(spec, {0.0, 1.0}, 0.0);
    CHECK(grad_ref[0] == doctest::Approx(-2.0).epsilon(1e-13));
    CHECK(grad_ref[1] == doctest::Approx(2.0).epsilon(1e-13));
    const NodalVector at_const = grad(spec, {3.0, 3.0}, 0.0);
    CHECK(at_const[0] == 0.0);
    CHECK(at_const[1] == 0.0);
}

TEST_CASE("gradient matches central differences for every smooth kind") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const ExponentField varp = coordinate_exponent(g);
    PairMatrix a(8, 1.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) a(i, j) = 1.0 + 0.25 * std::abs(g.coord(i, 0) - g.coord(j, 0));
    const WeightField w = make_weight(a, time_affine(1.0, 0.5), 2.0, 1.0);

    const SubdomainMask mask = build_mask(g, {0.25, 0.75, 0.0, 0.0});
    PairMatrix kappa(8, 2.0), inner(8, 6.0);
    const ExponentField partial = make_partial_exponent(mask, kappa, inner);

    const FunctionalSpec specs[] = {
        make_variable_p(g, t, varp),
        make_weighted_constant_p(g, t, w, 3.0),
        make_mixed(g, t, partial),
    };
    Rng rng(29);
    for (const FunctionalSpec& spec : specs) {
        const double probe_t = 0.3;
        for (int rep = 0; rep < 5; ++rep) {
            // Small amplitude keeps the mixed kind clear of its interior
            // slabs, so central differences never cross into the infinite part.
            NodalVector u(8);
            for (int i = 0; i < 8; ++i)
                u[static_cast<size_t>(i)] = 0.05 * std::sin((rep + 1) * g.coord(i, 0) * 3.0 + rng.uniform(0.0, 1.0));
            const NodalVector gr = grad(spec, u, probe_t);
            for (int i = 0; i < 8; ++i) {
                const double fd = fd_partial(spec, u, i, probe_t);
                CHECK(std::abs(gr[static_cast<size_t>(i)] - fd) / (1.0 + std::abs(gr[static_cast<size_t>(i)])) <=
                      1e-6);
            }
        }
    }
}

TEST_CASE("exponents below two stay finite at coincident values") {
    const Grid g = build_interval_grid(4, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec spec = make_variable_p(g, t, make_constant_exponent(4, 1.5));
    const NodalVector u{0.3, 0.3, -0.2, 0.3};
    const NodalVector gr = grad(spec, u, 0.0);
    for (double x : gr) CHECK(std::isfinite(x));
    CHECK(std::isfinite(eval(spec, u, 0.0).value));
    const NodalVector flat(4, 1.0);
    for (double x : grad(spec, flat, 0.0)) CHECK(x == 0.0);
}

TEST_CASE("energy overflow is loud from eval and grad, flagged from the guarded forms") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec spec = make_variable_p(g, t, make_constant_exponent(2, 64.0));
    const NodalVector huge{0.0, 1e9};
    CHECK_THROWS_AS(eval(spec, huge, 0.0), OverflowError);
    CHECK_THROWS_AS(grad(spec, huge, 0.0), OverflowError);
    const EvalResult r = eval_guarded(spec, huge, 0.0);
    CHECK(r.overflow);
    CHECK(r.i == 0);
    CHECK(r.j == 1);
    CHECK_FALSE(grad_guarded(spec, huge, 0.0).ok);
}

TEST_CASE("energy is convex along segments") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec spec = make_variable_p(g, t, coordinate_exponent(g));
    Rng rng(47);
    for (int rep = 0; rep < 20; ++rep) {
        const NodalVector u = random_state(rng, 8, 0.8);
        const NodalVector v = random_state(rng, 8, 0.8);
        const double eu = eval(spec, u, 0.0).value;
        const double ev = eval(spec, v, 0.0).value;
        for (double theta : {0.25, 0.5, 0.75}) {
            NodalVector mid(8);
            for (int i = 0; i < 8; ++i)
                mid[static_cast<size_t>(i)] =
                    theta * u[static_cast<size_t>(i)] + (1.0 - theta) * v[static_cast<size_t>(i)];
            const double emid = eval(spec, mid, 0.0).value;
            const double chord = theta * eu + (1.0 - theta) * ev;
            CHECK(emid <= chord + 1e-12 * (1.0 + std::abs(chord)));
        }
    }
}

TEST_CASE("gradient is monotone in the weighted pairing") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec spec = make_variable_p(g, t, coordinate_exponent(g));
    Rng rng(53);
    for (int rep = 0; rep < 20; ++rep) {
        const NodalVector u = random_state(rng, 8, 0.8);
        const NodalVector v = random_state(rng, 8, 0.8);
        const NodalVector gu = grad(spec, u, 0.0);
        const NodalVector gv = grad(spec, v, 0.0);
        NodalVector dg(8), du(8);
        for (int i = 0; i < 8; ++i) {
            dg[static_cast<size_t>(i)] = gu[static_cast<size_t>(i)] - gv[static_cast<size_t>(i)];
            du[static_cast<size_t>(i)] = u[static_cast<size_t>(i)] - v[static_cast<size_t>(i)];
        }
        CHECK(dot_h(g, dg, du) >= -1e-12);
    }
}

TEST_CASE("membership accepts the boundary and rejects beyond the slack") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    ConstraintSet cs;
    cs.grid = &g;
    cs.slabs.push_back({0, 1, 1.0});
    CHECK(membership(cs, {0.0, 1.0}).ok);
    CHECK(membership(cs, {0.0, 1.0 + 5e-11}, 1e-10).ok);
    CHECK_FALSE(membership(cs, {0.0, 1.0 + 3e-10}, 1e-10).ok);
    CHECK_FALSE(membership(cs, {0.0, 1.01}, 1e-9).ok);

    cs.pins.push_back({0, 2.0});
    const MembershipReport rep = membership(cs, {0.0, 0.5});
    CHECK_FALSE(rep.ok);
    CHECK(rep.i == 0);
    CHECK(rep.j == -1);
    CHECK(rep.worst == doctest::Approx(2.0));

    // Pin slack is minus the mismatch, so an exact pin contributes zero and
    // anything else goes negative.
    CHECK(constraint_margin(cs, {2.0, 1.5}) == doctest::Approx(0.0));
    CHECK(constraint_margin(cs, {1.9, 1.5}) == doctest::Approx(-0.1));
    cs.pins.clear();
    CHECK(constraint_margin(cs, {2.0, 1.5}) == doctest::Approx(0.5));
    CHECK(constraint_margin(cs, {0.0, 1.25}) == doctest::Approx(-0.25));
}

TEST_CASE("slab projection shifts the lighter node further") {
    const Grid equal = build_interval_grid(2, 0.0, 1.0);
    ConstraintSet cs;
    cs.grid = &equal;
    cs.slabs.push_back({0, 1, 1.0});
    const NodalVector p1 = project(cs, {0.0, 2.0});
    CHECK(p1[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p1[1] == doctest::Approx(1.5).epsilon(1e-12));

    Grid lopsided;
    lopsided.dim = 1;
    lopsided.coords = {0.0, 1.0};
    lopsided.weight = {1.0, 3.0};
    lopsided.box = {0.0, 4.0, 0.0, 0.0};
    cs.grid = &lopsided;
    ProjectionReport rep;
    const NodalVector p2 = project(cs, {0.0, 2.0}, 1e-10, -1, &rep);
    CHECK(p2[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(1.75).epsilon(1e-12));
    CHECK(rep.converged);
}

TEST_CASE("projection returns feasible input bitwise and is idempotent") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const ConstraintSet cs = make_kinf_set(g, t);
    Rng rng(61);

    NodalVector tame = random_state(rng, 8, 0.02);
    CHECK(project(cs, tame) == tame);

    for (int rep = 0; rep < 10; ++rep) {
        const NodalVector v = random_state(rng, 8, 2.0);
        const NodalVector once = project(cs, v);
        CHECK(holder_sup(t, once) <= 1.0 + 1e-8);
        const NodalVector twice = project(cs, once);
        for (int i = 0; i < 8; ++i)
            CHECK(std::abs(twice[static_cast<size_t>(i)] - once[static_cast<size_t>(i)]) <= 1e-9);
    }
}

TEST_CASE("projection is nonexpansive in the weighted norm") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const ConstraintSet cs = make_kinf_set(g, t);
    Rng rng(67);
    for (int rep = 0; rep < 30; ++rep) {
        const NodalVector a = random_state(rng, 8, 1.5);
        const NodalVector b = random_state(rng, 8, 1.5);
        const NodalVector pa = project(cs, a);
        const NodalVector pb = project(cs, b);
        NodalVector dp(8), d(8);
        for (int i = 0; i < 8; ++i) {
            dp[static_cast<size_t>(i)] = pa[static_cast<size_t>(i)] - pb[static_cast<size_t>(i)];
            d[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
        }
        CHECK(norm_h(g, dp) <= norm_h(g, d) + 1e-9);
    }
}

TEST_CASE("anchored projection pins the outside exactly") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const SubdomainMask mask = build_mask(g, {0.25, 0.75, 0.0, 0.0});
    NodalVector anchor(8);
    for (int i = 0; i < 8; ++i) anchor[static_cast<size_t>(i)] = 0.1 * g.coord(i, 0);
    const ConstraintSet cs = make_anchored_set(g, t, mask, anchor);
    Rng rng(71);
    const NodalVector v = random_state(rng, 8, 1.0);
    const NodalVector p = project(cs, v);
    for (int i = 0; i < 8; ++i)
        if (!mask.in(i)) CHECK(p[static_cast<size_t>(i)] == anchor[static_cast<size_t>(i)]);
    CHECK(membership(cs, p, 1e-8).ok);
    CHECK(cs.slabs.size() == 6);  // 4 inside nodes
    CHECK(cs.pins.size() == 4);
}

TEST_CASE("weighted set tightens as sigma grows") {
    const Grid g = build_interval_grid(4, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    PairMatrix a(4, 1.0);
    const WeightField w = make_weight(a, time_affine(1.0, 1.0), 2.0, 1.0);
    const ConstraintSet early = make_kt_set(g, t, w, 0.0);
    const ConstraintSet late = make_kt_set(g, t, w, 1.0);
    for (size_t k = 0; k < early.slabs.size(); ++k)
        CHECK(late.slabs[k].bound == doctest::Approx(0.5 * early.slabs[k].bound).epsilon(1e-12));

    const FunctionalSpec kinf = make_indicator_kinf(g, t);
    const ConstraintSet derived = constraint_set(kinf, 0.0);
    CHECK(derived.slabs.size() == 6);
    CHECK_THROWS_AS(constraint_set(make_variable_p(g, t, make_constant_exponent(4, 2.0)), 0.0), DomainError);
}

TEST_CASE("projection variational inequality holds at projected points") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec kinf = make_indicator_kinf(g, t);
    const ConstraintSet cs = make_kinf_set(g, t);
    Rng rng(83);
    for (int rep = 0; rep < 5; ++rep) {
        const NodalVector v = random_state(rng, 8, 2.0);
        const NodalVector u = project(cs, v);
        NodalVector w(8);
        for (int i = 0; i < 8; ++i) w[static_cast<size_t>(i)] = v[static_cast<size_t>(i)] - u[static_cast<size_t>(i)];
        Rng sampler = rng.fork("vi");
        CHECK(vi_residual(kinf, cs, u, w, 0.0, 30, sampler) <= 1e-8);
    }
}

TEST_CASE("interior points with nonzero drift flag a residual") {
    const Grid g = build_interval_grid(3, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec kinf = make_indicator_kinf(g, t);
    const ConstraintSet cs = make_kinf_set(g, t);
    const NodalVector u(3, 0.0);
    NodalVector w(3, 0.0);
    w[0] = 1.0;
    Rng rng(89);
    CHECK(vi_residual(kinf, cs, u, w, 0.0, 40, rng) > 0.0);

    NodalVector zero(3, 0.0);
    Rng rng2(97);
    CHECK(vi_residual(kinf, cs, u, zero, 0.0, 10, rng2) == 0.0);

    const NodalVector far{0.0, 0.0, 9.0};
    Rng rng3(101);
    CHECK_THROWS_AS(vi_residual(kinf, cs, far, w, 0.0, 10, rng3), DomainError);
}

TEST_CASE("smooth energy correction makes the origin pass against zero drift") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const FunctionalSpec spec = make_variable_p(g, t, coordinate_exponent(g));
    const ConstraintSet cs = make_kinf_set(g, t);
    const NodalVector u(8, 0.0);
    const NodalVector w(8, 0.0);
    Rng rng(103);
    // The origin minimizes the energy, so every sampled direction loses
    // exactly the energy it gains in the pairing.
    CHECK(vi_residual(spec, cs, u, w, 0.0, 20, rng) <= 0.0);
}

TEST_CASE("recovery-set states obey the large-exponent energy ceiling") {
    const Grid g = build_interval_grid(16, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    const double p_floor = 4.0;
    const ConstraintSet cs = make_recovery_set(g, t, p_floor);
    const ConstraintSet unit = make_kinf_set(g, t);
    const double mass = pair_mass(g);
    Rng rng(107);
    for (int rep = 0; rep < 20; ++rep) {
        NodalVector u = smooth_state(g, t, rng, 4.0);
        u = project(cs, u);
        // A hair of shrinkage keeps the projector tolerance from leaking
        // through the exponent amplification.
        for (double& x : u) x *= 1.0 - 1e-8;
        CHECK(membership(unit, u).ok);
        for (double pj : {4.0, 8.0, 16.0, 32.0, 64.0}) {
            const FunctionalSpec spec = make_variable_p(g, t, make_constant_exponent(16, pj));
            const double value = eval(spec, u, 0.0).value;
            CHECK(value >= 0.0);
            CHECK(value <= mass / pj);
        }
    }
}
