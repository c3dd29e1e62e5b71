#pragma once

#include <array>

#include "fracflow/common.hpp"

namespace fracflow {

/// Collocation grid of cell midpoints over an axis-aligned box. Each node
/// carries the measure of its cell. Midpoints never lie on the boundary, so
/// zero boundary data needs no explicit degrees of freedom.
struct Grid {
    int dim = 1;                  // 1 or 2
    std::vector<double> coords;   // node coordinates, row-major [n][dim]
    std::vector<double> weight;   // cell measure h_i, positive
    std::array<double, 4> box{};  // {lo_x, hi_x, lo_y, hi_y}; y slots unused in 1d

    int size() const { return static_cast<int>(weight.size()); }
    double coord(int i, int k) const { return coords[static_cast<size_t>(i) * dim + k]; }

    /// Box volume.
    double measure() const;
    /// Compensated sum of node weights; must match measure() to 1e-12 relative.
    double weight_sum() const;
    /// Euclidean distance between nodes i and j.
    double node_dist(int i, int j) const;
};

/// n interior midpoints of [a, b]: x_i = a + (i + 1/2) h, h = (b - a) / n.
Grid build_interval_grid(int n, double a, double b);

/// Tensor midpoint grid over the box, x fastest; weights are hx * hy.
Grid build_rect_grid(int nx, int ny, const std::array<double, 4>& box);

/// Pairwise geometry shared by every functional: distances and the pair
/// measure mu_ij = h_i h_j / d_ij^dim. Diagonal entries stay zero; dropping
/// them is the discrete counterpart of the principal value at x = y.
struct PairTable {
    int n = 0;
    int dim = 1;
    double s = 0.5;         // Holder index, in (0, 1)
    PairMatrix dist;        // symmetric, 0 on the diagonal
    PairMatrix mu;          // symmetric, 0 on the diagonal
    PairMatrix dist_pow_s;  // cache of d^s, 0 on the diagonal
    PairMatrix log_mu;      // cache of ln(mu), 0 on the diagonal (never read there)
};

PairTable build_pair_table(const Grid& grid, double s);

/// Node membership flags for an open sub-box O. A node pair is "interior"
/// when both endpoints lie in O; every other off-diagonal pair is "exterior".
struct SubdomainMask {
    int n = 0;
    std::vector<std::uint8_t> inside;
    int inside_count = 0;

    bool in(int i) const { return inside[static_cast<size_t>(i)] != 0; }
    bool pair_interior(int i, int j) const { return in(i) && in(j); }
    /// Ordered off-diagonal pairs with both endpoints in O.
    int interior_pair_count() const { return inside_count * (inside_count - 1); }
    /// Ordered off-diagonal pairs with at least one endpoint outside O.
    int exterior_pair_count() const { return n * (n - 1) - interior_pair_count(); }
};

/// Marks nodes strictly inside the open region box (y slots ignored in 1d).
SubdomainMask build_mask(const Grid& grid, const std::array<double, 4>& region);

/// Off-diagonal pair measure sum_{i != j} h_i h_j (compensated).
double pair_mass(const Grid& grid);

/// Weighted inner product sum_i u_i v_i h_i (compensated).
double dot_h(const Grid& grid, const NodalVector& u, const NodalVector& v);

/// Weighted norm sqrt(sum_i u_i^2 h_i).
double norm_h(const Grid& grid, const NodalVector& u);

}  // namespace fracflow
