#pragma once

#include "fracflow/fields.hpp"
#include "fracflow/grid.hpp"

namespace fracflow {

/// Largest log argument a guarded power term may reach. Leaves room for 2^30
/// summands below the largest finite double, so a guarded sum can never
/// saturate silently.
constexpr double kGuardLogMax = 688.0;

/// Largest scaled difference quotient max_{i != j} |u_i - u_j| / d_ij^s.
/// Zero on single-node grids. A state belongs to the unit constraint set
/// exactly when this does not exceed 1.
double holder_sup(const PairTable& pairs, const NodalVector& u);

/// Guarded evaluation outcome of a pair sum. `overflow` marks the first term
/// whose magnitude would have left the finite range; `value` is then invalid.
struct GuardedValue {
    double value = 0.0;
    bool overflow = false;
    int i = -1, j = -1;
    double quotient = 0.0;
};

/// sum_{i != j} (|u_i - u_j| / d_ij^s)^{p_ij} mu_ij with every term computed
/// as exp(p ln q + ln mu). Never throws; see modular() for the loud variant.
GuardedValue modular_guarded(const PairTable& pairs, const ExponentField& p, const NodalVector& u,
                             double lambda = 1.0);

/// Loud modular: throws OverflowError naming the offending pair.
double modular(const PairTable& pairs, const ExponentField& p, const NodalVector& u);

/// Modular of u / lambda without forming the scaled state.
double scaled_modular(const PairTable& pairs, const ExponentField& p, const NodalVector& u, double lambda);

/// Luxemburg seminorm: the lambda solving modular(u / lambda) = 1, found by
/// bisection after doubling/halving brackets the root; 0 when all differences
/// vanish. `tol` bounds |modular(u / lambda) - 1| at the returned lambda.
double luxemburg(const PairTable& pairs, const ExponentField& p, const NodalVector& u, double tol = 1e-10);

/// Joint modular/seminorm evaluation with the scaling inequalities that tie
/// them together: at the seminorm the modular is 1; above norm 1 the modular
/// is pinched by norm^(p-) and norm^(p+); below 1 the exponents swap roles.
struct ModularReport {
    double rho = 0.0;            // modular of u
    double lux = 0.0;            // Luxemburg seminorm of u
    double unit_residual = 0.0;  // |modular(u / lux) - 1|
    bool unit_at_norm = true;
    bool upper_regime_ok = true;
    bool lower_regime_ok = true;
    bool bounds_ok() const { return unit_at_norm && upper_regime_ok && lower_regime_ok; }
};

ModularReport check_norm_modular_bounds(const PairTable& pairs, const ExponentField& p,
                                        const NodalVector& u, double rel_tol = 1e-9,
                                        double lux_tol = 1e-10);

/// Node-based modular sum_i |u_i / lambda|^{eta_i} h_i (guarded the same way).
double node_modular(const Grid& grid, const NodalVector& eta, const NodalVector& u, double lambda = 1.0);

/// Node-based Luxemburg norm; reduces to the weighted 2-norm when eta == 2.
double node_luxemburg(const Grid& grid, const NodalVector& eta, const NodalVector& u, double tol = 1e-10);

/// Generalized Holder inequality |<u, v>_h| <= (1/eta- + 1/eta'-) |u|_eta |v|_eta'
/// with eta' the pointwise conjugate eta / (eta - 1).
struct PairingReport {
    double pairing = 0.0;
    double factor = 0.0;
    double norm_u = 0.0;
    double norm_v = 0.0;
    double slack = 0.0;  // factor * norm_u * norm_v - |pairing|
    bool ok = false;
};

PairingReport holder_pairing_check(const Grid& grid, const NodalVector& eta, const NodalVector& u,
                                   const NodalVector& v, double tol = 1e-9);

}  // namespace fracflow
