#include "fracflow/vnorm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fracflow {

namespace {

std::string overflow_message(const char* who, const GuardedValue& g, double p) {
    std::ostringstream os;
    os << who << ": term for pair (" << g.i << ", " << g.j << ") with quotient " << g.quotient
       << " and exponent " << p << " exceeds the finite range";
    return os.str();
}

/// Inequality a <= b with relative slack, compared in logs so that huge
/// powers never have to be materialized.
bool log_le(double log_a, double log_b, double rel_tol) { return log_a <= log_b + rel_tol; }

}  // namespace

double holder_sup(const PairTable& pairs, const NodalVector& u) {
    double sup = 0.0;
    for (int i = 0; i < pairs.n; ++i)
        for (int j = i + 1; j < pairs.n; ++j)
            sup = std::max(sup, std::abs(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)]) / pairs.dist_pow_s(i, j));
    return sup;
}

GuardedValue modular_guarded(const PairTable& pairs, const ExponentField& p, const NodalVector& u,
                             double lambda) {
    GuardedValue out;
    const double log_lambda = std::log(lambda);
    Ksum acc;
    for (int i = 0; i < pairs.n; ++i)
        for (int j = i + 1; j < pairs.n; ++j) {
            const double diff = std::abs(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)]);
            if (diff == 0.0) continue;
            const double q = diff / pairs.dist_pow_s(i, j);
            const double pij = p.at(i, j);
            const double ln_term = pij * (std::log(q) - log_lambda) + pairs.log_mu(i, j);
            if (ln_term > kGuardLogMax) {
                out.overflow = true;
                out.i = i;
                out.j = j;
                out.quotient = q / lambda;
                return out;
            }
            acc.add(std::exp(ln_term));
        }
    out.value = 2.0 * acc.value();  // both pair orientations contribute equally
    return out;
}

double modular(const PairTable& pairs, const ExponentField& p, const NodalVector& u) {
    const GuardedValue g = modular_guarded(pairs, p, u, 1.0);
    if (g.overflow) throw OverflowError(overflow_message("modular", g, p.at(g.i, g.j)));
    return g.value;
}

double scaled_modular(const PairTable& pairs, const ExponentField& p, const NodalVector& u, double lambda) {
    if (!(lambda > 0.0)) throw DomainError("scaled_modular: scale must be positive");
    const GuardedValue g = modular_guarded(pairs, p, u, lambda);
    if (g.overflow) throw OverflowError(overflow_message("scaled_modular", g, p.at(g.i, g.j)));
    return g.value;
}

namespace {

/// Per-pair precomputation so bisection probes cost one exp per pair.
struct ModularProbe {
    std::vector<double> ln_q, pij, ln_mu;

    ModularProbe(const PairTable& pairs, const ExponentField& p, const NodalVector& u) {
        for (int i = 0; i < pairs.n; ++i)
            for (int j = i + 1; j < pairs.n; ++j) {
                const double diff = std::abs(u[static_cast<size_t>(i)] - u[static_cast<size_t>(j)]);
                if (diff == 0.0) continue;
                ln_q.push_back(std::log(diff / pairs.dist_pow_s(i, j)));
                pij.push_back(p.at(i, j));
                ln_mu.push_back(pairs.log_mu(i, j));
            }
    }

    /// Modular of u / lambda; overflow reports +inf, which bisection reads as
    /// "still above 1" bracket evidence rather than an error.
    double at(double lambda) const {
        const double log_lambda = std::log(lambda);
        Ksum acc;
        for (size_t k = 0; k < ln_q.size(); ++k) {
            const double ln_term = pij[k] * (ln_q[k] - log_lambda) + ln_mu[k];
            if (ln_term > kGuardLogMax) return std::numeric_limits<double>::infinity();
            acc.add(std::exp(ln_term));
        }
        return 2.0 * acc.value();
    }
};

}  // namespace

double luxemburg(const PairTable& pairs, const ExponentField& p, const NodalVector& u, double tol) {
    if (!(tol > 0.0)) throw DomainError("luxemburg: tolerance must be positive");
    const ModularProbe probe(pairs, p, u);
    if (probe.ln_q.empty()) return 0.0;

    double lo, hi;
    if (probe.at(1.0) > 1.0) {
        lo = 1.0;
        hi = 2.0;
        while (probe.at(hi) > 1.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300) throw NonConvergenceError("luxemburg: bracket grew past 1e300");
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while (probe.at(lo) <= 1.0) {
            hi = lo;
            lo *= 0.5;
            if (lo < 1e-300) throw NonConvergenceError("luxemburg: bracket shrank past 1e-300");
        }
    }
    for (int iter = 0; iter < 2000; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double rho = probe.at(mid);
        if (std::abs(rho - 1.0) <= tol) return mid;
        (rho > 1.0 ? lo : hi) = mid;
    }
    throw NonConvergenceError("luxemburg: bisection failed to settle the unit modular");
}

ModularReport check_norm_modular_bounds(const PairTable& pairs, const ExponentField& p,
                                        const NodalVector& u, double rel_tol, double lux_tol) {
    ModularReport rep;
    rep.lux = luxemburg(pairs, p, u, lux_tol);
    if (rep.lux == 0.0) return rep;  // zero differences: nothing to pinch
    rep.rho = modular(pairs, p, u);
    rep.unit_residual = std::abs(scaled_modular(pairs, p, u, rep.lux) - 1.0);
    rep.unit_at_norm = rep.unit_residual <= 10.0 * lux_tol;

    const double log_rho = std::log(rep.rho);
    const double log_lux = std::log(rep.lux);
    if (rep.lux >= 1.0)
        rep.upper_regime_ok = log_le(p.p_minus * log_lux, log_rho, rel_tol) &&
                              log_le(log_rho, p.p_plus * log_lux, rel_tol);
    if (rep.lux <= 1.0)
        rep.lower_regime_ok = log_le(p.p_plus * log_lux, log_rho, rel_tol) &&
                              log_le(log_rho, p.p_minus * log_lux, rel_tol);
    return rep;
}

// ---------------------------------------------------------------------------
// Node-based norms and the pairing inequality
// ---------------------------------------------------------------------------

namespace {

void require_eta(const Grid& grid, const NodalVector& eta) {
    if (eta.size() != static_cast<size_t>(grid.size()))
        throw DomainError("node exponents: size does not match the grid");
    for (double e : eta)
        if (!(e > 1.0)) throw DomainError("node exponents: every entry must exceed 1");
}

double node_modular_guarded(const Grid& grid, const NodalVector& eta, const NodalVector& u, double lambda,
                            bool& overflow) {
    const double log_lambda = std::log(lambda);
    Ksum acc;
    for (int i = 0; i < grid.size(); ++i) {
        const double a = std::abs(u[static_cast<size_t>(i)]);
        if (a == 0.0) continue;
        const double ln_term = eta[static_cast<size_t>(i)] * (std::log(a) - log_lambda) +
                               std::log(grid.weight[static_cast<size_t>(i)]);
        if (ln_term > kGuardLogMax) {
            overflow = true;
            return std::numeric_limits<double>::infinity();
        }
        acc.add(std::exp(ln_term));
    }
    return acc.value();
}

}  // namespace

double node_modular(const Grid& grid, const NodalVector& eta, const NodalVector& u, double lambda) {
    require_eta(grid, eta);
    if (!(lambda > 0.0)) throw DomainError("node_modular: scale must be positive");
    bool overflow = false;
    const double v = node_modular_guarded(grid, eta, u, lambda, overflow);
    if (overflow) throw OverflowError("node_modular: a term exceeds the finite range");
    return v;
}

double node_luxemburg(const Grid& grid, const NodalVector& eta, const NodalVector& u, double tol) {
    require_eta(grid, eta);
    if (std::all_of(u.begin(), u.end(), [](double x) { return x == 0.0; })) return 0.0;
    bool overflow = false;
    auto rho = [&](double lambda) {
        overflow = false;
        return node_modular_guarded(grid, eta, u, lambda, overflow);
    };
    double lo, hi;
    if (rho(1.0) > 1.0) {
        lo = 1.0;
        hi = 2.0;
        while (rho(hi) > 1.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300) throw NonConvergenceError("node_luxemburg: bracket grew past 1e300");
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while (rho(lo) <= 1.0) {
            hi = lo;
            lo *= 0.5;
            if (lo < 1e-300) throw NonConvergenceError("node_luxemburg: bracket shrank past 1e-300");
        }
    }
    for (int iter = 0; iter < 2000; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double r = rho(mid);
        if (std::abs(r - 1.0) <= tol) return mid;
        (r > 1.0 ? lo : hi) = mid;
    }
    throw NonConvergenceError("node_luxemburg: bisection failed to settle the unit modular");
}

PairingReport holder_pairing_check(const Grid& grid, const NodalVector& eta, const NodalVector& u,
                                   const NodalVector& v, double tol) {
    require_eta(grid, eta);
    NodalVector conj(eta.size());
    for (size_t i = 0; i < eta.size(); ++i) conj[i] = eta[i] / (eta[i] - 1.0);

    PairingReport rep;
    rep.pairing = dot_h(grid, u, v);
    const double eta_min = *std::min_element(eta.begin(), eta.end());
    const double conj_min = *std::min_element(conj.begin(), conj.end());
    rep.factor = 1.0 / eta_min + 1.0 / conj_min;
    rep.norm_u = node_luxemburg(grid, eta, u);
    rep.norm_v = node_luxemburg(grid, conj, v);
    rep.slack = rep.factor * rep.norm_u * rep.norm_v - std::abs(rep.pairing);
    rep.ok = rep.slack >= -tol * (1.0 + std::abs(rep.pairing));
    return rep;
}

}  // namespace fracflow
