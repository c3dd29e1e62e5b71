#pragma once

#include "fracflow/fields.hpp"
#include "fracflow/grid.hpp"
#include "fracflow/vnorm.hpp"

namespace fracflow {

/// Which functional drives a flow. Smooth kinds integrate a pair energy;
/// indicator kinds are 0 on their constraint set and +inf off it; the mixed
/// kind does both, splitting pairs along a subdomain mask: pairs with both
/// endpoints inside keep the hard unit bound, every other pair is integrated
/// with the fixed exterior exponent (pairs straddling the boundary included).
struct FunctionalSpec {
    enum class Kind { WeightedConstantP, VariableP, IndicatorKt, IndicatorKinf, MixedO };

    Kind kind = Kind::VariableP;
    // Geometry is shared across stages and held by reference; the per-stage
    // weight and exponent fields are owned so a spec outlives its factory
    // arguments.
    const Grid* grid = nullptr;
    const PairTable* pairs = nullptr;
    WeightField weight;       // WeightedConstantP, IndicatorKt
    double constant_p = 0.0;  // WeightedConstantP
    ExponentField exponent;   // VariableP; MixedO takes a Partial field

    bool is_indicator() const { return kind == Kind::IndicatorKt || kind == Kind::IndicatorKinf; }
    bool has_smooth_part() const { return !is_indicator(); }
    bool has_constraint_part() const { return !has_smooth_part() || kind == Kind::MixedO; }
    const SubdomainMask& mask() const { return exponent.mask; }
};

FunctionalSpec make_weighted_constant_p(const Grid& g, const PairTable& t, const WeightField& w, double p);
FunctionalSpec make_variable_p(const Grid& g, const PairTable& t, const ExponentField& p);
FunctionalSpec make_indicator_kt(const Grid& g, const PairTable& t, const WeightField& w);
FunctionalSpec make_indicator_kinf(const Grid& g, const PairTable& t);
/// The exponent field must be Partial; its mask cuts the pair classes.
FunctionalSpec make_mixed(const Grid& g, const PairTable& t, const ExponentField& partial);

/// Functional value with an explicit infinity marker for indicator violations.
struct EnergyValue {
    double value = 0.0;
    bool finite = true;
};

/// Non-throwing evaluation for line searches: overflow and indicator
/// violations both come back as flags.
struct EvalResult {
    double value = 0.0;
    bool finite = true;
    bool overflow = false;
    int i = -1, j = -1;
    double quotient = 0.0;
};

EvalResult eval_guarded(const FunctionalSpec& spec, const NodalVector& u, double t);

/// The integrated pair energy alone, ignoring any indicator part (zero for
/// purely indicator kinds). Inner solvers and energy traces live on this.
EvalResult eval_smooth_part(const FunctionalSpec& spec, const NodalVector& u, double t);

/// Loud evaluation: throws OverflowError, reports indicator violations as
/// a non-finite EnergyValue.
EnergyValue eval(const FunctionalSpec& spec, const NodalVector& u, double t);

/// Euclidean gradient of the smooth part, g_i = d eval / d u_i; matches
/// central finite differences of eval. Indicator kinds have none.
NodalVector grad(const FunctionalSpec& spec, const NodalVector& u, double t);

/// grad with overflow flagged instead of thrown; `ok` false means the guard
/// tripped and `g` is invalid.
struct GradResult {
    NodalVector g;
    bool ok = true;
};
GradResult grad_guarded(const FunctionalSpec& spec, const NodalVector& u, double t);

/// Pairwise slab |u_i - u_j| <= bound.
struct PairSlab {
    int i = 0, j = 0;
    double bound = 0.0;
};

/// Equality pin u_i = value.
struct NodePin {
    int i = 0;
    double value = 0.0;
};

/// Intersection of pair slabs and node pins, with the weighted geometry the
/// projection lives in. Kinds: the time-dependent weighted set (bounds
/// d^s / A(t)), the unit set (bounds d^s), the anchored set (unit bounds on
/// interior pairs plus pins to the anchor outside), and the bare interior
/// slab set a mixed flow projects onto.
struct ConstraintSet {
    enum class Kind { Kt, Kinf, KinfAnchored, InteriorSlabs };

    Kind kind = Kind::Kinf;
    const Grid* grid = nullptr;
    std::vector<PairSlab> slabs;
    std::vector<NodePin> pins;
    double t = 0.0;
};

ConstraintSet make_kt_set(const Grid& g, const PairTable& t, const WeightField& w, double time);
ConstraintSet make_kinf_set(const Grid& g, const PairTable& t);
/// Unit set tightened by d^(dim / p_min) per pair: states inside satisfy
/// q^p * mu <= h_i h_j for every exponent >= p_min, which pins the energy of
/// a feasible state under the plain pair mass however large the exponent
/// grows. The natural carrier for recovery-style samples.
ConstraintSet make_recovery_set(const Grid& g, const PairTable& t, double p_min);
ConstraintSet make_anchored_set(const Grid& g, const PairTable& t, const SubdomainMask& mask,
                                const NodalVector& anchor);
ConstraintSet make_interior_slab_set(const Grid& g, const PairTable& t, const SubdomainMask& mask);

/// The feasible set a spec's constraint part describes at time `time`;
/// DomainError for purely smooth specs.
ConstraintSet constraint_set(const FunctionalSpec& spec, double time);

struct MembershipReport {
    bool ok = true;
    double worst = 0.0;  // largest absolute slab excess or pin mismatch
    int i = -1, j = -1;  // offending pair or pin (j = -1 for a pin)
};

/// Slabs pass when |u_i - u_j| <= bound (1 + tol); pins when
/// |u_i - value| <= tol (1 + |value|).
MembershipReport membership(const ConstraintSet& cs, const NodalVector& u, double tol = 1e-10);

/// Smallest slack bound - |u_i - u_j| over slabs and -|u_i - value| over
/// pins; negative exactly when some constraint is violated.
double constraint_margin(const ConstraintSet& cs, const NodalVector& u);

struct ProjectionReport {
    long sweeps = 0;
    long projections = 0;
    double max_violation = 0.0;
    double last_move = 0.0;
    bool converged = false;
};

/// Weighted projection onto the intersection by cyclic Dykstra iteration over
/// closed-form slab and pin projections. Feasible inputs come back unchanged.
/// max_proj < 0 selects the default cap of 1e5 * n elementary projections.
NodalVector project(const ConstraintSet& cs, const NodalVector& v, double tol = 1e-10, long max_proj = -1,
                    ProjectionReport* report = nullptr);

/// Residual of the variational inequality <w, z - u>_h <= E(z~) - E(u) over
/// sampled feasible directions: the max over `samples` draws z (a scaled
/// normal perturbation of u projected onto cs) of
///   <w, z - u>_h - [eval(spec, z, t) - eval(spec, u, t)]
/// with the eval bracket dropped for purely indicator specs. Nonpositive up
/// to solver tolerance exactly when u solves the inequality against w.
double vi_residual(const FunctionalSpec& spec, const ConstraintSet& cs, const NodalVector& u,
                   const NodalVector& w, double t, int samples, Rng& rng, double perturbation = 0.1,
                   double membership_tol = 1e-8);

}  // namespace fracflow
