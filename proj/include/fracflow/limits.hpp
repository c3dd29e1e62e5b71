#pragma once

#include <optional>
#include <string>

#include "fracflow/flow.hpp"

namespace fracflow {

/// Shared knobs for the exponent blow-up drivers and the functional
/// convergence diagnostics. One seed feeds every random draw.
struct LimitsConfig {
    StepConfig step;
    PeriodicConfig periodic;       // periodic driver only
    double eps_to_one = 0.1;       // schedule gate: sup^(1/min) proximity to 1 at the last stage
    int vi_samples = 30;           // feasible directions probed per stored time
    double vi_perturbation = 0.1;
    double membership_tol = 1e-8;
    double w12_trigger_tol = 1e-6; // start-energy tail size that unlocks the derivative metric
    double liminf_tol = 1e-6;
    double liminf_delta0 = 1e-6;   // first perturbation radius of the liminf sequence
    double divergence_threshold = 1e6;
    std::uint64_t seed = 1234;
    int threads = 1;               // stage solves fan out; outputs stay bit-identical
};

/// Distances of one finite-exponent trajectory to the limit trajectory, all
/// from the same stored states and forward differences. By construction
/// sqrt_t_w12_dist <= sqrt(T) * w12_dist.
struct StageMetrics {
    double p_minus = 0.0;
    double sup_dist = 0.0;          // max_k ||u_j(t_k) - u_inf(t_k)||_h
    double sqrt_t_w12_dist = 0.0;   // sqrt(sum_k dt t_{k+1} ||D_j,k - D_inf,k||_h^2)
    double w12_dist = 0.0;          // sqrt(sum_k dt ||D_j,k - D_inf,k||_h^2)
    double energy_at_start = 0.0;   // stage functional at its initial state
    double recovery_margin = 0.0;   // analytic start-energy bound minus energy_at_start
    double energy_dist = 0.0;       // partial mode: sqrt(sum_k dt * complement modular of the difference)
    bool solved = false;
    Trajectory traj;
};

/// Certificates measured on the limit trajectory alone.
struct LimitDiagnostics {
    bool membership_ok = true;      // constraint membership at every stored time
    double membership_worst = 0.0;  // largest recorded excess, violated or not
    double vi_worst = 0.0;          // worst variational-inequality residual
    double complement_residual = 0.0;  // partial mode: PDE residual on nodes outside the subdomain
    double interior_margin_min = 0.0;  // partial mode: smallest pair-slab margin inside
    double quasi_vi_worst = 0.0;       // partial mode: residual against the state-anchored set
};

/// Outcome of one blow-up experiment. Every stage is attempted; a failed
/// solve leaves its slot unsolved and records the first failure. A failed
/// limit solve aborts before any stage runs (failed_stage stays -1 and
/// failure is nonempty).
struct ConvergenceReport {
    std::vector<StageMetrics> stages;
    Trajectory limit;
    LimitDiagnostics diag;
    bool sup_monotone = false;   // sup_dist nonincreasing across solved stages
    bool w12_triggered = false;  // start-energy tail reached its target
    int failed_stage = -1;
    std::string failure;
    std::string failure_kind;  // config | domain | non_convergence | overflow | internal

    bool ok() const { return failure.empty(); }
};

/// Smooth random state projected onto the tightened unit-quotient set for
/// exponents >= p_min, then pulled inward by 1e-8 so the start-energy bound
/// survives projection tolerance raised to the largest exponent.
NodalVector sample_bounded_quotient_state(const Grid& g, const PairTable& t, double p_min, Rng& rng);

/// Exponent blow-up of the evolution problem: solves one Cauchy problem per
/// stage (weighted constant exponent when a weight is given, else the
/// variable-exponent functional), solves the limit flow with the matching
/// indicator functional, and reports per-stage distances plus limit
/// certificates. The derivative metric is always computed; w12_triggered
/// records whether the stage start energies actually vanish, which is the
/// hypothesis making that metric meaningful.
ConvergenceReport run_full_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                  const std::optional<WeightField>& weight, const ProblemData& data,
                                  const LimitsConfig& cfg);

/// Periodic counterpart: every stage must carry a constant exponent >= 2 and
/// the weight must not shrink over the period. Distances are reported
/// against the single limit periodic orbit; non-monotone distance sequences
/// are flagged through sup_monotone rather than treated as failures.
ConvergenceReport run_periodic_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                      const WeightField& weight, const ProblemData& data,
                                      const LimitsConfig& cfg);

/// Subdomain blow-up: stages solve the variable-exponent problem whose
/// interior exponent grows, the limit solves the mixed functional (hard unit
/// pair slabs inside, fixed-exponent integration elsewhere). On top of the
/// distance metrics the limit trajectory is certified by: the discrete PDE
/// residual restricted to outside nodes, the smallest interior slab margin,
/// and the quasi-variational residual against the set anchored at the
/// current state outside the subdomain.
ConvergenceReport run_partial_blowup(const Grid& g, const PairTable& t, const ExponentSequence& seq,
                                     const ProblemData& data, const LimitsConfig& cfg);

/// One stage of the recovery check: the worst sampled functional value
/// against its analytic bound. In full mode value and bound cap the stage
/// functional itself; in partial mode they cap the interior excess over the
/// complement modular.
struct RecoveryProbe {
    double p_minus = 0.0;
    double worst_value = 0.0;
    double bound = 0.0;
};

/// One stage of the liminf check: the stage functional along a sequence
/// converging to the probe state.
struct LiminfProbe {
    double delta = 0.0;
    double value = 0.0;
    bool finite = true;
};

struct MoscoReport {
    std::vector<RecoveryProbe> recovery;
    double limit_value = 0.0;  // limit functional at the liminf probe state
    std::vector<LiminfProbe> liminf;
    double liminf_tail = 0.0;  // smallest stage value over the tail half
    bool liminf_ok = false;
    std::vector<double> infeasible_values;  // stage values at a quotient-1.5 state
    bool infeasible_diverged = false;
};

/// Two-sided functional convergence probe: (i) recovery, sampled feasible
/// states keep every stage value under the analytic bound that vanishes with
/// growing exponents; (ii) liminf, stage values along perturbed sequences
/// stay above the limit value minus tolerance, while a state whose quotient
/// exceeds one must blow up past divergence_threshold.
MoscoReport mosco_diagnostics(const Grid& g, const PairTable& t, const ExponentSequence& seq, int samples,
                              const LimitsConfig& cfg);

}  // namespace fracflow
