#include "fracflow/grid.hpp"

#include <cmath>

namespace fracflow {

double Grid::measure() const {
    double m = box[1] - box[0];
    if (dim == 2) m *= box[3] - box[2];
    return m;
}

double Grid::weight_sum() const {
    Ksum acc;
    for (double w : weight) acc.add(w);
    return acc.value();
}

double Grid::node_dist(int i, int j) const {
    if (dim == 1) return std::abs(coord(i, 0) - coord(j, 0));
    const double dx = coord(i, 0) - coord(j, 0);
    const double dy = coord(i, 1) - coord(j, 1);
    return std::sqrt(dx * dx + dy * dy);
}

Grid build_interval_grid(int n, double a, double b) {
    if (n < 1) throw DomainError("build_interval_grid: need at least one cell");
    if (!(b > a)) throw DomainError("build_interval_grid: empty interval");
    Grid g;
    g.dim = 1;
    g.box = {a, b, 0.0, 0.0};
    const double h = (b - a) / n;
    g.coords.resize(static_cast<size_t>(n));
    g.weight.assign(static_cast<size_t>(n), h);
    for (int i = 0; i < n; ++i) g.coords[static_cast<size_t>(i)] = a + (i + 0.5) * h;
    return g;
}

Grid build_rect_grid(int nx, int ny, const std::array<double, 4>& box) {
    if (nx < 1 || ny < 1) throw DomainError("build_rect_grid: need at least one cell per axis");
    if (!(box[1] > box[0]) || !(box[3] > box[2])) throw DomainError("build_rect_grid: empty box");
    Grid g;
    g.dim = 2;
    g.box = box;
    const double hx = (box[1] - box[0]) / nx;
    const double hy = (box[3] - box[2]) / ny;
    const int n = nx * ny;
    g.coords.resize(static_cast<size_t>(n) * 2);
    g.weight.assign(static_cast<size_t>(n), hx * hy);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const int i = iy * nx + ix;
            g.coords[static_cast<size_t>(i) * 2] = box[0] + (ix + 0.5) * hx;
            g.coords[static_cast<size_t>(i) * 2 + 1] = box[2] + (iy + 0.5) * hy;
        }
    return g;
}

PairTable build_pair_table(const Grid& grid, double s) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("build_pair_table: Holder index must lie in (0, 1)");
    const int n = grid.size();
    PairTable t;
    t.n = n;
    t.dim = grid.dim;
    t.s = s;
    t.dist = PairMatrix(n, 0.0);
    t.mu = PairMatrix(n, 0.0);
    t.dist_pow_s = PairMatrix(n, 0.0);
    t.log_mu = PairMatrix(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = grid.node_dist(i, j);
            if (!(d > 0.0)) throw DomainError("build_pair_table: coincident nodes");
            const double dn = (grid.dim == 1) ? d : d * d;
            const double mu = grid.weight[static_cast<size_t>(i)] * grid.weight[static_cast<size_t>(j)] / dn;
            t.dist.set_sym(i, j, d);
            t.mu.set_sym(i, j, mu);
            t.dist_pow_s.set_sym(i, j, std::pow(d, s));
            t.log_mu.set_sym(i, j, std::log(mu));
        }
    return t;
}

SubdomainMask build_mask(const Grid& grid, const std::array<double, 4>& region) {
    SubdomainMask m;
    m.n = grid.size();
    m.inside.assign(static_cast<size_t>(grid.size()), 0);
    for (int i = 0; i < grid.size(); ++i) {
        bool in = grid.coord(i, 0) > region[0] && grid.coord(i, 0) < region[1];
        if (grid.dim == 2) in = in && grid.coord(i, 1) > region[2] && grid.coord(i, 1) < region[3];
        if (in) {
            m.inside[static_cast<size_t>(i)] = 1;
            ++m.inside_count;
        }
    }
    return m;
}

double pair_mass(const Grid& grid) {
    Ksum total;
    Ksum squares;
    for (double w : grid.weight) {
        total.add(w);
        squares.add(w * w);
    }
    const double t = total.value();
    return t * t - squares.value();
}

double dot_h(const Grid& grid, const NodalVector& u, const NodalVector& v) {
    Ksum acc;
    for (int i = 0; i < grid.size(); ++i)
        acc.add(u[static_cast<size_t>(i)] * v[static_cast<size_t>(i)] * grid.weight[static_cast<size_t>(i)]);
    return acc.value();
}

double norm_h(const Grid& grid, const NodalVector& u) {
    Ksum acc;
    for (int i = 0; i < grid.size(); ++i) {
        const double x = u[static_cast<size_t>(i)];
        acc.add(x * x * grid.weight[static_cast<size_t>(i)]);
    }
    return std::sqrt(std::max(0.0, acc.value()));
}

}  // namespace fracflow
