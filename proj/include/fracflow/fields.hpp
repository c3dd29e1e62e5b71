#pragma once

#include <string>

#include "fracflow/grid.hpp"

namespace fracflow {

/// One validation outcome; validators return these instead of throwing so
/// callers can report every failed precondition at once.
struct NamedCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

bool all_pass(const std::vector<NamedCheck>& checks);

/// Closed-form scalar profile of time with exact interval means and range
/// bounds. Table profiles interpolate linearly and clamp outside the samples.
struct TimeProfile {
    enum class Kind { One, Constant, Affine, Sin, Table };

    Kind kind = Kind::One;
    double c0 = 1.0;    // Constant value; Affine intercept; Sin offset
    double c1 = 0.0;    // Affine slope; Sin amplitude
    double freq = 0.0;  // Sin angular frequency
    double phase = 0.0; // Sin phase
    std::vector<double> t_samples;  // Table abscissae, strictly increasing
    std::vector<double> v_samples;

    double eval(double t) const;
    /// Exact integral over [t0, t1] divided by the length.
    double mean(double t0, double t1) const;
    double min_on(double t0, double t1) const;
    double max_on(double t0, double t1) const;
    bool is_zero() const;
    bool is_constant() const;
};

TimeProfile time_one();
TimeProfile time_constant(double c);
TimeProfile time_affine(double intercept, double slope);
TimeProfile time_sin(double offset, double amplitude, double freq, double phase);
TimeProfile time_table(std::vector<double> t, std::vector<double> v);

/// Closed-form spatial profile sampled at grid nodes.
struct SpaceProfile {
    enum class Kind { One, SinBump, Gauss, Box, Linear, Samples };

    Kind kind = Kind::One;
    double cx = 0.0, cy = 0.0;      // Gauss center; Linear gradient
    double width = 1.0;             // Gauss width
    std::array<double, 4> box{};    // Box region
    double offset = 0.0;            // Linear offset
    std::vector<double> samples;    // Samples: one value per node

    double eval(const Grid& grid, int i) const;
};

SpaceProfile space_one();
SpaceProfile space_sin_bump();
SpaceProfile space_gauss(double cx, double cy, double width);
SpaceProfile space_box(const std::array<double, 4>& box);
SpaceProfile space_linear(double offset, double gx, double gy);
SpaceProfile space_samples(std::vector<double> values);

/// Sample amplitude * profile at every node.
NodalVector sample_profile(const Grid& grid, const SpaceProfile& profile, double amplitude);

/// Sum of separable terms amplitude * space(x) * time(t).
struct Forcing {
    struct Term {
        double amplitude = 0.0;
        SpaceProfile space;
        TimeProfile time;
    };
    std::vector<Term> terms;

    void eval(const Grid& grid, double t, NodalVector& out) const;
    /// Exact time mean over (t0, t1] per node.
    void eval_mean(const Grid& grid, double t0, double t1, NodalVector& out) const;
    bool is_zero() const;
    bool time_constant() const;
};

/// Symmetric pair exponent table. Every off-diagonal entry exceeds one;
/// extrema are recorded at construction. Partial tables carry separate
/// extrema for the two pair classes cut out by a subdomain mask.
struct ExponentField {
    enum class Kind { Constant, Tabulated, Partial };

    Kind kind = Kind::Constant;
    PairMatrix p;  // symmetric, > 1 off the diagonal; diagonal unused
    double p_minus = 0.0;
    double p_plus = 0.0;
    // Partial only: the mask that cut the classes and the per-class extrema
    // (exterior pairs keep the fixed exponent, interior pairs blow up).
    SubdomainMask mask;
    double outer_minus = 0.0, outer_plus = 0.0;
    double inner_minus = 0.0, inner_plus = 0.0;

    double at(int i, int j) const { return p(i, j); }
    int size() const { return p.size(); }
    bool is_constant() const;
    /// The single value of a constant field.
    double constant_value() const;
};

ExponentField make_constant_exponent(int n, double p);
/// Validates symmetry to 1e-12 relative and p > 1 off the diagonal.
ExponentField make_tabulated_exponent(const PairMatrix& p);
/// Interior pairs take `inner`, every other off-diagonal pair takes `kappa`.
ExponentField make_partial_exponent(const SubdomainMask& mask, const PairMatrix& kappa, const PairMatrix& inner);

/// Stage list for blow-up experiments.
struct ExponentSequence {
    enum class Mode { Full, Partial };
    Mode mode = Mode::Full;
    std::vector<ExponentField> stages;
};

/// Full mode: stage j is scale_j * base, everywhere.
ExponentSequence make_full_blowup_sequence(const ExponentField& base, const std::vector<double>& schedule);
/// Partial mode: interior pairs get scale_j * inner_base, exterior pairs keep kappa.
ExponentSequence make_partial_blowup_sequence(const SubdomainMask& mask, const PairMatrix& kappa,
                                              const PairMatrix& inner_base, const std::vector<double>& schedule);

/// Divergence checks: min exponents strictly increasing, sup^(1/min) strictly
/// decreasing and within eps_to_one of 1 at the last stage, fixed exterior
/// class in partial mode. Degenerate sequences come back flagged, not thrown.
std::vector<NamedCheck> validate_sequence(const ExponentSequence& seq, double eps_to_one);

/// Separable time-modulated pair weight a_ij * sigma(t), bounded by a0 on [0, T].
struct WeightField {
    PairMatrix a;       // symmetric, strictly positive off the diagonal
    TimeProfile sigma;  // strictly positive on [0, T]
    double a0 = 1.0;
    double T = 1.0;

    bool is_unit() const;
};

/// Validates symmetry, positivity, the a0 envelope on [0, T], and the sigma
/// kind (constant, affine, or sinusoidal; each is square-integrable with its
/// derivative by construction).
WeightField make_weight(const PairMatrix& a, const TimeProfile& sigma, double a0, double T);
WeightField make_unit_weight(int n, double T);

double weight_eval(const WeightField& w, int i, int j, double t);

/// The time factor alone, with the same [0, T] domain check as weight_eval.
double weight_sigma(const WeightField& w, double t);

/// Checks consumed by the periodic runners: end-of-period weight must
/// dominate the start for the blow-up gate.
std::vector<NamedCheck> validate_weight_for_period(const WeightField& w);

/// Cauchy / periodic problem data. Per-stage overrides are optional; blow-up
/// runners fall back to the shared forcing and initial state.
struct ProblemData {
    double T = 1.0;
    Forcing forcing;
    NodalVector u0;
    std::vector<Forcing> forcing_stages;   // empty or one per stage
    std::vector<NodalVector> u0_stages;    // empty or one per stage
};

/// CSV pair-table loader: rows "i,j,value". Both orientations may appear;
/// they must agree to 1e-12 relative. Every off-diagonal pair must be covered.
PairMatrix load_pair_csv(const std::string& path, int n);

}  // namespace fracflow
