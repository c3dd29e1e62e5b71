#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "fracflow/grid.hpp"

using namespace fracflow;

namespace {

/// Brute-force both sides of the exactness identity
/// sum_{i != j} mu_ij d_ij^dim = (sum_i h_i)^2 - sum_i h_i^2.
void check_pair_identity(const Grid& g, const PairTable& t) {
    Ksum lhs;
    for (int i = 0; i < t.n; ++i)
        for (int j = 0; j < t.n; ++j) {
            if (i == j) continue;
            const double dn = (t.dim == 1) ? t.dist(i, j) : t.dist(i, j) * t.dist(i, j);
            lhs.add(t.mu(i, j) * dn);
        }
    Ksum wsum, wsq;
    for (double w : g.weight) {
        wsum.add(w);
        wsq.add(w * w);
    }
    const double rhs = wsum.value() * wsum.value() - wsq.value();
    CHECK(lhs.value() == doctest::Approx(rhs).epsilon(1e-13));
}

}  // namespace

TEST_CASE("interval grid hits midpoints and cell weights") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    REQUIRE(g.size() == 2);
    CHECK(g.coord(0, 0) == 0.25);
    CHECK(g.coord(1, 0) == 0.75);
    CHECK(g.weight[0] == 0.5);
    CHECK(g.weight[1] == 0.5);

    const Grid g3 = build_interval_grid(3, -1.0, 2.0);
    REQUIRE(g3.size() == 3);
    CHECK(g3.coord(0, 0) == -0.5);
    CHECK(g3.coord(1, 0) == 0.5);
    CHECK(g3.coord(2, 0) == 1.5);
    CHECK(g3.weight[0] == 1.0);
    CHECK(g3.weight[2] == 1.0);
}

TEST_CASE("weights sum to the box measure") {
    for (int n : {1, 2, 7, 64}) {
        const Grid g = build_interval_grid(n, -1.0, 2.0);
        CHECK(g.weight_sum() == doctest::Approx(g.measure()).epsilon(1e-12));
    }
    const Grid r = build_rect_grid(5, 3, {0.0, 2.0, -1.0, 1.0});
    REQUIRE(r.size() == 15);
    CHECK(r.weight_sum() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("grid builders reject degenerate input") {
    CHECK_THROWS_AS(build_interval_grid(0, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(build_interval_grid(4, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(build_interval_grid(4, 2.0, 1.0), DomainError);
    CHECK_THROWS_AS(build_rect_grid(0, 3, {0, 1, 0, 1}), DomainError);
    CHECK_THROWS_AS(build_rect_grid(2, 2, {0, 1, 1, 1}), DomainError);
}

TEST_CASE("pair table frozen examples") {
    const Grid g2 = build_interval_grid(2, 0.0, 1.0);
    const PairTable t2 = build_pair_table(g2, 0.5);
    CHECK(t2.dist(0, 1) == 0.5);
    CHECK(t2.mu(0, 1) == 0.5);
    CHECK(t2.dist(0, 0) == 0.0);
    CHECK(t2.mu(1, 1) == 0.0);

    const Grid g3 = build_interval_grid(3, -1.0, 2.0);
    const PairTable t3 = build_pair_table(g3, 0.5);
    CHECK(t3.dist(0, 2) == 2.0);
    CHECK(t3.mu(0, 2) == 0.5);
}

TEST_CASE("pair table is symmetric and satisfies the mass identity") {
    const Grid g = build_interval_grid(17, -1.0, 2.0);
    const PairTable t = build_pair_table(g, 0.37);
    for (int i = 0; i < t.n; ++i)
        for (int j = 0; j < t.n; ++j) {
            CHECK(t.dist(i, j) == t.dist(j, i));
            CHECK(t.mu(i, j) == t.mu(j, i));
        }
    check_pair_identity(g, t);

    const Grid r = build_rect_grid(5, 3, {0.0, 2.0, -1.0, 1.0});
    check_pair_identity(r, build_pair_table(r, 0.5));
}

TEST_CASE("single-node grid has an empty pair table") {
    const Grid g = build_interval_grid(1, 0.0, 1.0);
    const PairTable t = build_pair_table(g, 0.5);
    REQUIRE(t.n == 1);
    CHECK(t.mu(0, 0) == 0.0);
    check_pair_identity(g, t);
}

TEST_CASE("relabeling nodes permutes the pair table consistently") {
    const Grid g = build_interval_grid(5, 0.0, 1.0);
    Grid p = g;
    // Reverse the node order by hand.
    const int n = g.size();
    for (int i = 0; i < n; ++i) {
        p.coords[static_cast<size_t>(i)] = g.coords[static_cast<size_t>(n - 1 - i)];
        p.weight[static_cast<size_t>(i)] = g.weight[static_cast<size_t>(n - 1 - i)];
    }
    const PairTable tg = build_pair_table(g, 0.5);
    const PairTable tp = build_pair_table(p, 0.5);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            CHECK(tp.dist(i, j) == tg.dist(n - 1 - i, n - 1 - j));
            CHECK(tp.mu(i, j) == tg.mu(n - 1 - i, n - 1 - j));
        }
}

TEST_CASE("pair table rejects bad Holder index and coincident nodes") {
    const Grid g = build_interval_grid(4, 0.0, 1.0);
    for (double s : {0.0, 1.0, -0.3, 1.7}) CHECK_THROWS_AS(build_pair_table(g, s), DomainError);

    Grid bad = g;
    bad.coords[1] = bad.coords[0];
    CHECK_THROWS_AS(build_pair_table(bad, 0.5), DomainError);
}

TEST_CASE("mask marks strictly interior nodes") {
    const Grid g = build_interval_grid(8, 0.0, 1.0);
    const SubdomainMask m = build_mask(g, {0.25, 0.75, 0.0, 0.0});
    CHECK(m.inside_count == 4);
    for (int i = 0; i < 8; ++i) CHECK(m.in(i) == (i >= 2 && i <= 5));
    CHECK(m.interior_pair_count() == 12);
    CHECK(m.exterior_pair_count() == 8 * 7 - 12);
    CHECK(m.pair_interior(2, 5));
    CHECK_FALSE(m.pair_interior(2, 6));

    // Nodes sitting exactly on the region boundary stay outside.
    const SubdomainMask edge = build_mask(g, {0.0625, 0.9375, 0.0, 0.0});
    CHECK_FALSE(edge.in(0));
    CHECK_FALSE(edge.in(7));
    CHECK(edge.inside_count == 6);
}

TEST_CASE("weighted inner product and norm") {
    const Grid g = build_interval_grid(2, 0.0, 1.0);
    const NodalVector u{1.0, 2.0};
    const NodalVector v{3.0, -1.0};
    CHECK(dot_h(g, u, v) == doctest::Approx(0.5 * (3.0 - 2.0)));
    CHECK(norm_h(g, u) == doctest::Approx(std::sqrt(0.5 * 5.0)));
}
