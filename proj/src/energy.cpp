#include "fracflow/energy.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fracflow {

namespace {

// Feasibility slack for indicator evaluation: wide enough to absorb the
// default projection tolerance, far below any modeled constraint violation.
constexpr double kIndicatorSlackAbs = 1e-9;
constexpr double kIndicatorSlackRel = 1e-9;

bool within_slab(double diff, double bound) {
    return std::abs(diff) <= bound * (1.0 + kIndicatorSlackRel) + kIndicatorSlackAbs;
}

void require_geometry(const Grid& g, const PairTable& t, const char* who) {
    if (g.size() != t.n) throw DomainError(std::string(who) + ": grid and pair table disagree on size");
}

}  // namespace

FunctionalSpec make_weighted_constant_p(const Grid& g, const PairTable& t, const WeightField& w, double p) {
    require_geometry(g, t, "make_weighted_constant_p");
    if (w.a.size() != t.n) throw DomainError("make_weighted_constant_p: weight table size mismatch");
    if (!(p > 1.0)) throw DomainError("make_weighted_constant_p: exponent must exceed 1");
    FunctionalSpec spec;
    spec.kind = FunctionalSpec::Kind::WeightedConstantP;
    spec.grid = &g;
    spec.pairs = &t;
    spec.weight = w;
    spec.constant_p = p;
    return spec;
}

FunctionalSpec make_variable_p(const Grid& g, const PairTable& t, const ExponentField& p) {
    require_geometry(g, t, "make_variable_p");
    if (p.size() != t.n) throw DomainError("make_variable_p: exponent table size mismatch");
    FunctionalSpec spec;
    spec.kind = FunctionalSpec::Kind::VariableP;
    spec.grid = &g;
    spec.pairs = &t;
    spec.exponent = p;
    return spec;
}

FunctionalSpec make_indicator_kt(const Grid& g, const PairTable& t, const WeightField& w) {
    require_geometry(g, t, "make_indicator_kt");
    if (w.a.size() != t.n) throw DomainError("make_indicator_kt: weight table size mismatch");
    FunctionalSpec spec;
    spec.kind = FunctionalSpec::Kind::IndicatorKt;
    spec.grid = &g;
    spec.pairs = &t;
    spec.weight = w;
    return spec;
}

FunctionalSpec make_indicator_kinf(const Grid& g, const PairTable& t) {
    require_geometry(g, t, "make_indicator_kinf");
    FunctionalSpec spec;
    spec.kind = FunctionalSpec::Kind::IndicatorKinf;
    spec.grid = &g;
    spec.pairs = &t;
    return spec;
}

FunctionalSpec make_mixed(const Grid& g, const PairTable& t, const ExponentField& partial) {
    require_geometry(g, t, "make_mixed");
    if (partial.kind != ExponentField::Kind::Partial)
        throw DomainError("make_mixed: exponent field must carry a subdomain mask");
    if (partial.size() != t.n) throw DomainError("make_mixed: exponent table size mismatch");
    FunctionalSpec spec;
    spec.kind = FunctionalSpec::Kind::MixedO;
    spec.grid = &g;
    spec.pairs = &t;
    spec.exponent = partial;
    return spec;
}

namespace {

// Smooth pair energy only; indicator parts are handled by the callers.
// Every term goes through logs so large exponents degrade to a flag, never
// to inf arithmetic.
EvalResult smooth_eval(const FunctionalSpec& spec, const NodalVector& u, double t) {
    EvalResult r;
    if (spec.is_indicator()) return r;
    const PairTable& pt = *spec.pairs;
    const bool weighted = spec.kind == FunctionalSpec::Kind::WeightedConstantP;
    const bool mixed = spec.kind == FunctionalSpec::Kind::MixedO;
    const double log_sigma_over_p =
        weighted ? std::log(weight_sigma(spec.weight, t)) - std::log(spec.constant_p) : 0.0;
    Ksum acc;
    for (int i = 0; i < pt.n; ++i)
        for (int j = i + 1; j < pt.n; ++j) {
            if (mixed && spec.mask().pair_interior(i, j)) continue;
            const double diff = std::abs(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)]);
            if (diff == 0.0) continue;
            const double q = diff / pt.dist_pow_s(i, j);
            const double p = weighted ? spec.constant_p : spec.exponent.at(i, j);
            double log_term = p * std::log(q) + pt.log_mu(i, j);
            if (weighted)
                log_term += std::log(spec.weight.a(i, j)) + log_sigma_over_p;
            else
                log_term -= std::log(p);
            if (log_term > kGuardLogMax) {
                r.overflow = true;
                r.i = i;
                r.j = j;
                r.quotient = q;
                r.value = std::numeric_limits<double>::infinity();
                return r;
            }
            acc.add(std::exp(log_term));
        }
    r.value = 2.0 * acc.value();
    return r;
}

// Indicator feasibility for the kinds that carry one; true when no slab is
// violated beyond the evaluation slack.
bool indicator_feasible(const FunctionalSpec& spec, const NodalVector& u, double t) {
    const PairTable& pt = *spec.pairs;
    switch (spec.kind) {
        case FunctionalSpec::Kind::IndicatorKt: {
            const double sig = weight_sigma(spec.weight, t);
            for (int i = 0; i < pt.n; ++i)
                for (int j = i + 1; j < pt.n; ++j) {
                    const double bound = pt.dist_pow_s(i, j) / (spec.weight.a(i, j) * sig);
                    if (!within_slab(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)], bound)) return false;
                }
            return true;
        }
        case FunctionalSpec::Kind::IndicatorKinf: {
            for (int i = 0; i < pt.n; ++i)
                for (int j = i + 1; j < pt.n; ++j)
                    if (!within_slab(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)], pt.dist_pow_s(i, j)))
                        return false;
            return true;
        }
        case FunctionalSpec::Kind::MixedO: {
            for (int i = 0; i < pt.n; ++i)
                for (int j = i + 1; j < pt.n; ++j)
                    if (spec.mask().pair_interior(i, j) &&
                        !within_slab(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)], pt.dist_pow_s(i, j)))
                        return false;
            return true;
        }
        default:
            return true;
    }
}

}  // namespace

EvalResult eval_smooth_part(const FunctionalSpec& spec, const NodalVector& u, double t) {
    if (static_cast<int>(u.size()) != spec.pairs->n) throw DomainError("eval: state size mismatch");
    return smooth_eval(spec, u, t);
}

EvalResult eval_guarded(const FunctionalSpec& spec, const NodalVector& u, double t) {
    if (static_cast<int>(u.size()) != spec.pairs->n) throw DomainError("eval: state size mismatch");
    if (spec.has_constraint_part() && !indicator_feasible(spec, u, t)) {
        EvalResult r;
        r.finite = false;
        r.value = std::numeric_limits<double>::infinity();
        return r;
    }
    return smooth_eval(spec, u, t);
}

EnergyValue eval(const FunctionalSpec& spec, const NodalVector& u, double t) {
    const EvalResult r = eval_guarded(spec, u, t);
    if (r.overflow)
        throw OverflowError("eval: pair (" + std::to_string(r.i) + ", " + std::to_string(r.j) +
                            ") exceeds the exponential range, quotient " + std::to_string(r.quotient));
    return {r.value, r.finite};
}

GradResult grad_guarded(const FunctionalSpec& spec, const NodalVector& u, double t) {
    if (spec.is_indicator()) throw DomainError("grad: indicator functionals have no smooth gradient");
    if (static_cast<int>(u.size()) != spec.pairs->n) throw DomainError("grad: state size mismatch");
    const PairTable& pt = *spec.pairs;
    const bool weighted = spec.kind == FunctionalSpec::Kind::WeightedConstantP;
    const bool mixed = spec.kind == FunctionalSpec::Kind::MixedO;
    const double log_sigma = weighted ? std::log(weight_sigma(spec.weight, t)) : 0.0;
    const double log2 = std::log(2.0);
    GradResult out;
    out.g.assign(u.size(), 0.0);
    for (int i = 0; i < pt.n; ++i)
        for (int j = i + 1; j < pt.n; ++j) {
            if (mixed && spec.mask().pair_interior(i, j)) continue;
            const double delta = u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)];
            if (delta == 0.0) continue;
            const double dps = pt.dist_pow_s(i, j);
            const double q = std::abs(delta) / dps;
            const double p = weighted ? spec.constant_p : spec.exponent.at(i, j);
            double log_mag = log2 + (p - 1.0) * std::log(q) + pt.log_mu(i, j) - std::log(dps);
            if (weighted) log_mag += std::log(spec.weight.a(i, j)) + log_sigma;
            if (log_mag > kGuardLogMax) {
                out.ok = false;
                return out;
            }
            const double mag = std::exp(log_mag);
            const double signed_mag = (delta > 0.0) ? mag : -mag;
            out.g[static_cast<size_t>(i)] += signed_mag;
            out.g[static_cast<size_t>(j)] -= signed_mag;
        }
    return out;
}

NodalVector grad(const FunctionalSpec& spec, const NodalVector& u, double t) {
    GradResult r = grad_guarded(spec, u, t);
    if (!r.ok) throw OverflowError("grad: a pair term exceeds the exponential range");
    return std::move(r.g);
}

ConstraintSet make_kt_set(const Grid& g, const PairTable& t, const WeightField& w, double time) {
    require_geometry(g, t, "make_kt_set");
    if (w.a.size() != t.n) throw DomainError("make_kt_set: weight table size mismatch");
    const double sig = weight_sigma(w, time);
    ConstraintSet cs;
    cs.kind = ConstraintSet::Kind::Kt;
    cs.grid = &g;
    cs.t = time;
    for (int i = 0; i < t.n; ++i)
        for (int j = i + 1; j < t.n; ++j)
            cs.slabs.push_back({i, j, t.dist_pow_s(i, j) / (w.a(i, j) * sig)});
    return cs;
}

ConstraintSet make_kinf_set(const Grid& g, const PairTable& t) {
    require_geometry(g, t, "make_kinf_set");
    ConstraintSet cs;
    cs.kind = ConstraintSet::Kind::Kinf;
    cs.grid = &g;
    for (int i = 0; i < t.n; ++i)
        for (int j = i + 1; j < t.n; ++j) cs.slabs.push_back({i, j, t.dist_pow_s(i, j)});
    return cs;
}

ConstraintSet make_recovery_set(const Grid& g, const PairTable& t, double p_min) {
    if (!(p_min > 1.0)) throw DomainError("make_recovery_set: exponent floor must exceed 1");
    ConstraintSet cs = make_kinf_set(g, t);
    // Distances of one or more already have mu <= h_i h_j, so the unit bound
    // is tight enough there; shorter pairs shrink by d^(dim / p_min).
    for (PairSlab& s : cs.slabs)
        s.bound *= std::min(1.0, std::pow(t.dist(s.i, s.j), static_cast<double>(t.dim) / p_min));
    return cs;
}

ConstraintSet make_anchored_set(const Grid& g, const PairTable& t, const SubdomainMask& mask,
                                const NodalVector& anchor) {
    require_geometry(g, t, "make_anchored_set");
    if (mask.n != t.n) throw DomainError("make_anchored_set: mask size mismatch");
    if (static_cast<int>(anchor.size()) != t.n) throw DomainError("make_anchored_set: anchor size mismatch");
    ConstraintSet cs;
    cs.kind = ConstraintSet::Kind::KinfAnchored;
    cs.grid = &g;
    for (int i = 0; i < t.n; ++i)
        for (int j = i + 1; j < t.n; ++j)
            if (mask.pair_interior(i, j)) cs.slabs.push_back({i, j, t.dist_pow_s(i, j)});
    for (int i = 0; i < t.n; ++i)
        if (!mask.in(i)) cs.pins.push_back({i, anchor[static_cast<size_t>(i)]});
    return cs;
}

ConstraintSet make_interior_slab_set(const Grid& g, const PairTable& t, const SubdomainMask& mask) {
    require_geometry(g, t, "make_interior_slab_set");
    if (mask.n != t.n) throw DomainError("make_interior_slab_set: mask size mismatch");
    ConstraintSet cs;
    cs.kind = ConstraintSet::Kind::InteriorSlabs;
    cs.grid = &g;
    for (int i = 0; i < t.n; ++i)
        for (int j = i + 1; j < t.n; ++j)
            if (mask.pair_interior(i, j)) cs.slabs.push_back({i, j, t.dist_pow_s(i, j)});
    return cs;
}

ConstraintSet constraint_set(const FunctionalSpec& spec, double time) {
    switch (spec.kind) {
        case FunctionalSpec::Kind::IndicatorKt:
            return make_kt_set(*spec.grid, *spec.pairs, spec.weight, time);
        case FunctionalSpec::Kind::IndicatorKinf:
            return make_kinf_set(*spec.grid, *spec.pairs);
        case FunctionalSpec::Kind::MixedO:
            return make_interior_slab_set(*spec.grid, *spec.pairs, spec.mask());
        default:
            throw DomainError("constraint_set: functional has no constraint part");
    }
}

MembershipReport membership(const ConstraintSet& cs, const NodalVector& u, double tol) {
    MembershipReport rep;
    for (const PairSlab& s : cs.slabs) {
        const double diff = std::abs(u[static_cast<size_t>(s.i)] - u[static_cast<size_t>(s.j)]);
        const double excess = diff - s.bound;
        if (diff > s.bound * (1.0 + tol) && excess > rep.worst) {
            rep.ok = false;
            rep.worst = excess;
            rep.i = s.i;
            rep.j = s.j;
        }
    }
    for (const NodePin& p : cs.pins) {
        const double miss = std::abs(u[static_cast<size_t>(p.i)] - p.value);
        if (miss > tol * (1.0 + std::abs(p.value)) && miss > rep.worst) {
            rep.ok = false;
            rep.worst = miss;
            rep.i = p.i;
            rep.j = -1;
        }
    }
    return rep;
}

double constraint_margin(const ConstraintSet& cs, const NodalVector& u) {
    double margin = std::numeric_limits<double>::infinity();
    for (const PairSlab& s : cs.slabs) {
        const double diff = std::abs(u[static_cast<size_t>(s.i)] - u[static_cast<size_t>(s.j)]);
        margin = std::min(margin, s.bound - diff);
    }
    for (const NodePin& p : cs.pins)
        margin = std::min(margin, -std::abs(u[static_cast<size_t>(p.i)] - p.value));
    return margin;
}

namespace {

bool exactly_feasible(const ConstraintSet& cs, const NodalVector& v) {
    for (const PairSlab& s : cs.slabs)
        if (std::abs(v[static_cast<size_t>(s.i)] - v[static_cast<size_t>(s.j)]) > s.bound) return false;
    for (const NodePin& p : cs.pins)
        if (v[static_cast<size_t>(p.i)] != p.value) return false;
    return true;
}

double max_violation(const ConstraintSet& cs, const NodalVector& x) {
    double worst = 0.0;
    for (const PairSlab& s : cs.slabs) {
        const double diff = std::abs(x[static_cast<size_t>(s.i)] - x[static_cast<size_t>(s.j)]);
        worst = std::max(worst, diff - s.bound);
    }
    for (const NodePin& p : cs.pins)
        worst = std::max(worst, std::abs(x[static_cast<size_t>(p.i)] - p.value));
    return worst;
}

}  // namespace

NodalVector project(const ConstraintSet& cs, const NodalVector& v, double tol, long max_proj,
                    ProjectionReport* report) {
    if (cs.grid == nullptr) throw DomainError("project: constraint set has no geometry");
    const int n = cs.grid->size();
    if (static_cast<int>(v.size()) != n) throw DomainError("project: state size mismatch");
    if (max_proj < 0) max_proj = 100000L * static_cast<long>(n);

    ProjectionReport local;
    ProjectionReport& rep = report ? *report : local;
    rep = ProjectionReport{};

    if (exactly_feasible(cs, v)) {
        rep.converged = true;
        return v;
    }

    NodalVector x = v;
    NodalVector x_prev(x.size());
    // Dykstra corrections, one pair per slab and one scalar per pin. Without
    // them the cyclic sweep converges to a feasible point that is not the
    // nearest one.
    std::vector<double> slab_ci(cs.slabs.size(), 0.0), slab_cj(cs.slabs.size(), 0.0);
    std::vector<double> pin_c(cs.pins.size(), 0.0);
    const std::vector<double>& h = cs.grid->weight;

    while (true) {
        x_prev = x;
        for (size_t k = 0; k < cs.slabs.size(); ++k) {
            const PairSlab& s = cs.slabs[k];
            const size_t i = static_cast<size_t>(s.i), j = static_cast<size_t>(s.j);
            const double zi = x[i] + slab_ci[k];
            const double zj = x[j] + slab_cj[k];
            const double delta = zi - zj;
            if (std::abs(delta) <= s.bound) {
                x[i] = zi;
                x[j] = zj;
                slab_ci[k] = 0.0;
                slab_cj[k] = 0.0;
            } else {
                const double excess = delta - (delta > 0.0 ? s.bound : -s.bound);
                const double denom = h[i] + h[j];
                x[i] = zi - excess * h[j] / denom;
                x[j] = zj + excess * h[i] / denom;
                slab_ci[k] = zi - x[i];
                slab_cj[k] = zj - x[j];
            }
        }
        for (size_t k = 0; k < cs.pins.size(); ++k) {
            const NodePin& p = cs.pins[k];
            const size_t i = static_cast<size_t>(p.i);
            const double z = x[i] + pin_c[k];
            x[i] = p.value;
            pin_c[k] = z - p.value;
        }
        rep.sweeps += 1;
        rep.projections += static_cast<long>(cs.slabs.size() + cs.pins.size());
        double move = 0.0;
        for (size_t i = 0; i < x.size(); ++i) move = std::max(move, std::abs(x[i] - x_prev[i]));
        rep.last_move = move;
        rep.max_violation = max_violation(cs, x);
        if (rep.max_violation <= tol && move <= tol) {
            rep.converged = true;
            return x;
        }
        if (rep.projections >= max_proj)
            throw NonConvergenceError("project: projection budget exhausted at violation " +
                                      std::to_string(rep.max_violation));
    }
}

double vi_residual(const FunctionalSpec& spec, const ConstraintSet& cs, const NodalVector& u,
                   const NodalVector& w, double t, int samples, Rng& rng, double perturbation,
                   double membership_tol) {
    if (samples < 1) throw DomainError("vi_residual: need at least one sample");
    const MembershipReport member = membership(cs, u, membership_tol);
    if (!member.ok)
        throw DomainError("vi_residual: base state violates the constraint set by " +
                          std::to_string(member.worst));
    const bool with_energy = spec.has_smooth_part();
    double e_u = 0.0;
    if (with_energy) {
        const EvalResult r = smooth_eval(spec, u, t);
        if (r.overflow) throw OverflowError("vi_residual: energy overflow at the base state");
        e_u = r.value;
    }
    const Grid& g = *spec.grid;
    double best = -std::numeric_limits<double>::infinity();
    NodalVector z(u.size());
    NodalVector diff(u.size());
    for (int k = 0; k < samples; ++k) {
        for (size_t i = 0; i < u.size(); ++i) z[i] = u[i] + perturbation * rng.normal();
        z = project(cs, z);
        for (size_t i = 0; i < u.size(); ++i) diff[i] = z[i] - u[i];
        double gain = dot_h(g, w, diff);
        if (with_energy) {
            const EvalResult r = smooth_eval(spec, z, t);
            if (r.overflow) throw OverflowError("vi_residual: energy overflow at a sampled state");
            gain -= r.value - e_u;
        }
        best = std::max(best, gain);
    }
    return best;
}

}  // namespace fracflow
