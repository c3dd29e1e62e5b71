#include "fracflow/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fracflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSymTol = 1e-12;

bool sym_close(double a, double b) { return std::abs(a - b) <= kSymTol * (1.0 + std::abs(a)); }

/// Copies the upper triangle over the lower one after checking agreement.
PairMatrix symmetrized(const PairMatrix& m, const char* who) {
    PairMatrix out = m;
    for (int i = 0; i < m.size(); ++i)
        for (int j = i + 1; j < m.size(); ++j) {
            if (!sym_close(m(i, j), m(j, i)))
                throw DomainError(std::string(who) + ": pair table asymmetric beyond 1e-12");
            out(j, i) = out(i, j);
        }
    return out;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

}  // namespace

bool all_pass(const std::vector<NamedCheck>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const NamedCheck& c) { return c.pass; });
}

// ---------------------------------------------------------------------------
// TimeProfile
// ---------------------------------------------------------------------------

double TimeProfile::eval(double t) const {
    switch (kind) {
        case Kind::One: return 1.0;
        case Kind::Constant: return c0;
        case Kind::Affine: return c0 + c1 * t;
        case Kind::Sin: return c0 + c1 * std::sin(freq * t + phase);
        case Kind::Table: {
            if (t <= t_samples.front()) return v_samples.front();
            if (t >= t_samples.back()) return v_samples.back();
            const auto it = std::upper_bound(t_samples.begin(), t_samples.end(), t);
            const size_t k = static_cast<size_t>(it - t_samples.begin());
            const double w = (t - t_samples[k - 1]) / (t_samples[k] - t_samples[k - 1]);
            return v_samples[k - 1] + w * (v_samples[k] - v_samples[k - 1]);
        }
    }
    return 0.0;
}

double TimeProfile::mean(double t0, double t1) const {
    if (!(t1 > t0)) throw DomainError("TimeProfile::mean: empty interval");
    switch (kind) {
        case Kind::One: return 1.0;
        case Kind::Constant: return c0;
        case Kind::Affine: return c0 + c1 * 0.5 * (t0 + t1);
        case Kind::Sin: {
            if (freq == 0.0) return c0 + c1 * std::sin(phase);
            return c0 + c1 * (std::cos(freq * t0 + phase) - std::cos(freq * t1 + phase)) / (freq * (t1 - t0));
        }
        case Kind::Table: {
            // Exact integral of the clamped piecewise-linear interpolant.
            Ksum acc;
            auto trapezoid = [&](double a, double b) {
                if (b <= a) return;
                acc.add(0.5 * (eval(a) + eval(b)) * (b - a));
            };
            const double lo = t_samples.front();
            const double hi = t_samples.back();
            trapezoid(t0, std::min(t1, lo));
            double prev = std::max(t0, lo);
            for (size_t k = 0; k < t_samples.size(); ++k) {
                const double knot = t_samples[k];
                if (knot <= prev) continue;
                if (knot >= t1) break;
                trapezoid(prev, knot);
                prev = knot;
            }
            trapezoid(prev, std::min(t1, hi));
            trapezoid(std::max(t0, hi), t1);
            return acc.value() / (t1 - t0);
        }
    }
    return 0.0;
}

namespace {

double extremum_on(const TimeProfile& p, double t0, double t1, bool want_max) {
    std::vector<double> cand{t0, t1};
    if (p.kind == TimeProfile::Kind::Sin && p.freq != 0.0 && p.c1 != 0.0) {
        // Stationary points: freq * t + phase = pi/2 + k*pi.
        const double kmin = std::ceil((p.freq * t0 + p.phase) / kPi - 0.5);
        const double kmax = std::floor((p.freq * t1 + p.phase) / kPi - 0.5);
        for (double k = kmin; k <= kmax; k += 1.0) cand.push_back(((0.5 + k) * kPi - p.phase) / p.freq);
    }
    if (p.kind == TimeProfile::Kind::Table)
        for (size_t k = 0; k < p.t_samples.size(); ++k)
            if (p.t_samples[k] > t0 && p.t_samples[k] < t1) cand.push_back(p.t_samples[k]);
    double best = p.eval(cand[0]);
    for (double t : cand) {
        const double v = p.eval(t);
        best = want_max ? std::max(best, v) : std::min(best, v);
    }
    return best;
}

}  // namespace

double TimeProfile::min_on(double t0, double t1) const { return extremum_on(*this, t0, t1, false); }
double TimeProfile::max_on(double t0, double t1) const { return extremum_on(*this, t0, t1, true); }

bool TimeProfile::is_zero() const {
    switch (kind) {
        case Kind::One: return false;
        case Kind::Constant: return c0 == 0.0;
        case Kind::Affine: return c0 == 0.0 && c1 == 0.0;
        case Kind::Sin: return c0 == 0.0 && c1 == 0.0;
        case Kind::Table: return std::all_of(v_samples.begin(), v_samples.end(), [](double v) { return v == 0.0; });
    }
    return false;
}

bool TimeProfile::is_constant() const {
    switch (kind) {
        case Kind::One:
        case Kind::Constant: return true;
        case Kind::Affine: return c1 == 0.0;
        case Kind::Sin: return c1 == 0.0 || freq == 0.0;
        case Kind::Table:
            return std::all_of(v_samples.begin(), v_samples.end(),
                               [&](double v) { return v == v_samples.front(); });
    }
    return false;
}

TimeProfile time_one() { return {}; }

TimeProfile time_constant(double c) {
    TimeProfile p;
    p.kind = TimeProfile::Kind::Constant;
    p.c0 = c;
    return p;
}

TimeProfile time_affine(double intercept, double slope) {
    TimeProfile p;
    p.kind = TimeProfile::Kind::Affine;
    p.c0 = intercept;
    p.c1 = slope;
    return p;
}

TimeProfile time_sin(double offset, double amplitude, double freq, double phase) {
    if (!(freq > 0.0)) throw DomainError("time_sin: frequency must be positive");
    TimeProfile p;
    p.kind = TimeProfile::Kind::Sin;
    p.c0 = offset;
    p.c1 = amplitude;
    p.freq = freq;
    p.phase = phase;
    return p;
}

TimeProfile time_table(std::vector<double> t, std::vector<double> v) {
    if (t.size() != v.size() || t.size() < 2) throw DomainError("time_table: need matching samples, at least two");
    for (size_t k = 1; k < t.size(); ++k)
        if (!(t[k] > t[k - 1])) throw DomainError("time_table: abscissae must strictly increase");
    TimeProfile p;
    p.kind = TimeProfile::Kind::Table;
    p.t_samples = std::move(t);
    p.v_samples = std::move(v);
    return p;
}

// ---------------------------------------------------------------------------
// SpaceProfile
// ---------------------------------------------------------------------------

double SpaceProfile::eval(const Grid& grid, int i) const {
    const double x = grid.coord(i, 0);
    const double y = grid.dim == 2 ? grid.coord(i, 1) : 0.0;
    switch (kind) {
        case Kind::One: return 1.0;
        case Kind::SinBump: {
            double v = std::sin(kPi * (x - grid.box[0]) / (grid.box[1] - grid.box[0]));
            if (grid.dim == 2) v *= std::sin(kPi * (y - grid.box[2]) / (grid.box[3] - grid.box[2]));
            return v;
        }
        case Kind::Gauss: {
            const double dx = x - cx;
            const double dy = grid.dim == 2 ? y - cy : 0.0;
            return std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
        }
        case Kind::Box: {
            bool in = x > box[0] && x < box[1];
            if (grid.dim == 2) in = in && y > box[2] && y < box[3];
            return in ? 1.0 : 0.0;
        }
        case Kind::Linear: return offset + cx * x + (grid.dim == 2 ? cy * y : 0.0);
        case Kind::Samples: {
            if (samples.size() != static_cast<size_t>(grid.size()))
                throw DomainError("SpaceProfile: sample count does not match the grid");
            return samples[static_cast<size_t>(i)];
        }
    }
    return 0.0;
}

SpaceProfile space_one() { return {}; }

SpaceProfile space_sin_bump() {
    SpaceProfile p;
    p.kind = SpaceProfile::Kind::SinBump;
    return p;
}

SpaceProfile space_gauss(double cx, double cy, double width) {
    if (!(width > 0.0)) throw DomainError("space_gauss: width must be positive");
    SpaceProfile p;
    p.kind = SpaceProfile::Kind::Gauss;
    p.cx = cx;
    p.cy = cy;
    p.width = width;
    return p;
}

SpaceProfile space_box(const std::array<double, 4>& box) {
    SpaceProfile p;
    p.kind = SpaceProfile::Kind::Box;
    p.box = box;
    return p;
}

SpaceProfile space_linear(double offset, double gx, double gy) {
    SpaceProfile p;
    p.kind = SpaceProfile::Kind::Linear;
    p.offset = offset;
    p.cx = gx;
    p.cy = gy;
    return p;
}

SpaceProfile space_samples(std::vector<double> values) {
    SpaceProfile p;
    p.kind = SpaceProfile::Kind::Samples;
    p.samples = std::move(values);
    return p;
}

NodalVector sample_profile(const Grid& grid, const SpaceProfile& profile, double amplitude) {
    NodalVector out(static_cast<size_t>(grid.size()));
    for (int i = 0; i < grid.size(); ++i) out[static_cast<size_t>(i)] = amplitude * profile.eval(grid, i);
    return out;
}

// ---------------------------------------------------------------------------
// Forcing
// ---------------------------------------------------------------------------

void Forcing::eval(const Grid& grid, double t, NodalVector& out) const {
    out.assign(static_cast<size_t>(grid.size()), 0.0);
    for (const Term& term : terms) {
        const double tv = term.amplitude * term.time.eval(t);
        if (tv == 0.0) continue;
        for (int i = 0; i < grid.size(); ++i) out[static_cast<size_t>(i)] += tv * term.space.eval(grid, i);
    }
}

void Forcing::eval_mean(const Grid& grid, double t0, double t1, NodalVector& out) const {
    out.assign(static_cast<size_t>(grid.size()), 0.0);
    for (const Term& term : terms) {
        const double tv = term.amplitude * term.time.mean(t0, t1);
        if (tv == 0.0) continue;
        for (int i = 0; i < grid.size(); ++i) out[static_cast<size_t>(i)] += tv * term.space.eval(grid, i);
    }
}

bool Forcing::is_zero() const {
    return std::all_of(terms.begin(), terms.end(),
                       [](const Term& t) { return t.amplitude == 0.0 || t.time.is_zero(); });
}

bool Forcing::time_constant() const {
    return std::all_of(terms.begin(), terms.end(), [](const Term& t) { return t.time.is_constant(); });
}

// ---------------------------------------------------------------------------
// ExponentField
// ---------------------------------------------------------------------------

namespace {

void require_above_one(const PairMatrix& p, const char* who) {
    for (int i = 0; i < p.size(); ++i)
        for (int j = 0; j < p.size(); ++j) {
            if (i == j) continue;
            if (!(p(i, j) > 1.0)) throw DomainError(std::string(who) + ": exponents must exceed 1");
        }
}

}  // namespace

bool ExponentField::is_constant() const { return kind == Kind::Constant; }

double ExponentField::constant_value() const {
    if (kind != Kind::Constant) throw DomainError("ExponentField: not a constant field");
    return p(0, 1);
}

ExponentField make_constant_exponent(int n, double p) {
    if (n < 2) throw DomainError("make_constant_exponent: need at least two nodes");
    if (!(p > 1.0)) throw DomainError("make_constant_exponent: exponent must exceed 1");
    ExponentField f;
    f.kind = ExponentField::Kind::Constant;
    f.p = PairMatrix(n, p);
    f.p_minus = f.p_plus = p;
    return f;
}

ExponentField make_tabulated_exponent(const PairMatrix& p) {
    if (p.size() < 2) throw DomainError("make_tabulated_exponent: need at least two nodes");
    ExponentField f;
    f.kind = ExponentField::Kind::Tabulated;
    f.p = symmetrized(p, "make_tabulated_exponent");
    require_above_one(f.p, "make_tabulated_exponent");
    f.p_minus = f.p.min_off_diagonal();
    f.p_plus = f.p.max_off_diagonal();
    return f;
}

ExponentField make_partial_exponent(const SubdomainMask& mask, const PairMatrix& kappa, const PairMatrix& inner) {
    const int n = mask.n;
    if (kappa.size() != n || inner.size() != n)
        throw DomainError("make_partial_exponent: table sizes do not match the mask");
    if (mask.interior_pair_count() == 0 || mask.exterior_pair_count() == 0)
        throw DomainError("make_partial_exponent: both pair classes must be nonempty");
    const PairMatrix ks = symmetrized(kappa, "make_partial_exponent(kappa)");
    const PairMatrix is = symmetrized(inner, "make_partial_exponent(inner)");
    ExponentField f;
    f.kind = ExponentField::Kind::Partial;
    f.mask = mask;
    f.p = PairMatrix(n, 0.0);
    bool first_out = true, first_in = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool interior = mask.pair_interior(i, j);
            const double v = interior ? is(i, j) : ks(i, j);
            f.p(i, j) = v;
            if (interior) {
                f.inner_minus = first_in ? v : std::min(f.inner_minus, v);
                f.inner_plus = first_in ? v : std::max(f.inner_plus, v);
                first_in = false;
            } else {
                f.outer_minus = first_out ? v : std::min(f.outer_minus, v);
                f.outer_plus = first_out ? v : std::max(f.outer_plus, v);
                first_out = false;
            }
        }
    require_above_one(f.p, "make_partial_exponent");
    f.p_minus = std::min(f.outer_minus, f.inner_minus);
    f.p_plus = std::max(f.outer_plus, f.inner_plus);
    return f;
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

ExponentSequence make_full_blowup_sequence(const ExponentField& base, const std::vector<double>& schedule) {
    if (schedule.empty()) throw DomainError("make_full_blowup_sequence: empty schedule");
    ExponentSequence seq;
    seq.mode = ExponentSequence::Mode::Full;
    for (double scale : schedule) {
        if (!(scale > 0.0)) throw DomainError("make_full_blowup_sequence: scales must be positive");
        if (base.is_constant()) {
            seq.stages.push_back(make_constant_exponent(base.size(), scale * base.constant_value()));
        } else {
            PairMatrix p = base.p;
            for (int i = 0; i < p.size(); ++i)
                for (int j = 0; j < p.size(); ++j) p(i, j) *= scale;
            seq.stages.push_back(make_tabulated_exponent(p));
        }
    }
    return seq;
}

ExponentSequence make_partial_blowup_sequence(const SubdomainMask& mask, const PairMatrix& kappa,
                                              const PairMatrix& inner_base, const std::vector<double>& schedule) {
    if (schedule.empty()) throw DomainError("make_partial_blowup_sequence: empty schedule");
    ExponentSequence seq;
    seq.mode = ExponentSequence::Mode::Partial;
    for (double scale : schedule) {
        if (!(scale > 0.0)) throw DomainError("make_partial_blowup_sequence: scales must be positive");
        PairMatrix inner = inner_base;
        for (int i = 0; i < inner.size(); ++i)
            for (int j = 0; j < inner.size(); ++j) inner(i, j) *= scale;
        seq.stages.push_back(make_partial_exponent(mask, kappa, inner));
    }
    return seq;
}

std::vector<NamedCheck> validate_sequence(const ExponentSequence& seq, double eps_to_one) {
    std::vector<NamedCheck> checks;
    const bool partial = seq.mode == ExponentSequence::Mode::Partial;
    auto lo = [&](const ExponentField& f) { return partial ? f.inner_minus : f.p_minus; };
    auto hi = [&](const ExponentField& f) { return partial ? f.inner_plus : f.p_plus; };

    bool above_one = true;
    for (const ExponentField& f : seq.stages) above_one = above_one && f.p_minus > 1.0;
    checks.push_back({"exponents_above_one", above_one, ""});

    NamedCheck inc{"min_exponent_strictly_increasing", true, ""};
    if (seq.stages.size() < 2) {
        inc.pass = false;
        inc.detail = "needs at least two stages to diverge";
    } else {
        for (size_t j = 1; j < seq.stages.size(); ++j)
            if (!(lo(seq.stages[j]) > lo(seq.stages[j - 1]))) {
                inc.pass = false;
                inc.detail = "stage " + std::to_string(j) + ": " + fmt(lo(seq.stages[j])) +
                             " does not exceed " + fmt(lo(seq.stages[j - 1]));
                break;
            }
    }
    checks.push_back(inc);

    auto root = [&](const ExponentField& f) { return std::pow(hi(f), 1.0 / lo(f)); };
    NamedCheck dec{"sup_root_strictly_decreasing", true, ""};
    if (seq.stages.size() < 2) {
        dec.pass = false;
        dec.detail = "needs at least two stages to diverge";
    } else {
        for (size_t j = 1; j < seq.stages.size(); ++j)
            if (!(root(seq.stages[j]) < root(seq.stages[j - 1]))) {
                dec.pass = false;
                dec.detail = "stage " + std::to_string(j) + ": " + fmt(root(seq.stages[j])) +
                             " does not fall below " + fmt(root(seq.stages[j - 1]));
                break;
            }
    }
    checks.push_back(dec);

    const double last = root(seq.stages.back());
    checks.push_back({"sup_root_near_one", last <= 1.0 + eps_to_one,
                      "final value " + fmt(last) + ", target 1 + " + fmt(eps_to_one)});

    if (partial) {
        NamedCheck fixed{"outer_exponent_fixed", true, ""};
        const ExponentField& first = seq.stages.front();
        for (size_t j = 1; j < seq.stages.size() && fixed.pass; ++j)
            for (int a = 0; a < first.size() && fixed.pass; ++a)
                for (int b = 0; b < first.size(); ++b) {
                    if (a == b || first.mask.pair_interior(a, b)) continue;
                    if (seq.stages[j].p(a, b) != first.p(a, b)) {
                        fixed.pass = false;
                        fixed.detail = "stage " + std::to_string(j) + " drifts at pair (" +
                                       std::to_string(a) + ", " + std::to_string(b) + ")";
                        break;
                    }
                }
        checks.push_back(fixed);
    }
    return checks;
}

// ---------------------------------------------------------------------------
// WeightField
// ---------------------------------------------------------------------------

bool WeightField::is_unit() const {
    if (!sigma.is_constant() || sigma.eval(0.0) != 1.0) return false;
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < a.size(); ++j)
            if (i != j && a(i, j) != 1.0) return false;
    return true;
}

WeightField make_weight(const PairMatrix& a, const TimeProfile& sigma, double a0, double T) {
    if (!(T > 0.0)) throw DomainError("make_weight: horizon must be positive");
    if (!(a0 > 0.0)) throw DomainError("make_weight: envelope a0 must be positive");
    if (sigma.kind == TimeProfile::Kind::Table)
        throw DomainError("make_weight: sigma must be a closed-form profile (constant, affine, or sinusoidal)");
    WeightField w;
    w.a = symmetrized(a, "make_weight");
    w.sigma = sigma;
    w.a0 = a0;
    w.T = T;
    double amin = 0.0, amax = 0.0;
    bool first = true;
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < a.size(); ++j) {
            if (i == j) continue;
            const double v = w.a(i, j);
            if (!(v > 0.0)) throw DomainError("make_weight: spatial factor must be strictly positive");
            amin = first ? v : std::min(amin, v);
            amax = first ? v : std::max(amax, v);
            first = false;
        }
    const double smin = sigma.min_on(0.0, T);
    const double smax = sigma.max_on(0.0, T);
    if (!(smin > 0.0)) throw DomainError("make_weight: sigma must stay strictly positive on [0, T]");
    if (!first && amax * smax > a0 * (1.0 + 1e-12))
        throw DomainError("make_weight: weight exceeds the a0 envelope (max " + fmt(amax * smax) + ")");
    return w;
}

WeightField make_unit_weight(int n, double T) {
    return make_weight(PairMatrix(n, 1.0), time_constant(1.0), 1.0, T);
}

double weight_eval(const WeightField& w, int i, int j, double t) {
    return w.a(i, j) * weight_sigma(w, t);
}

double weight_sigma(const WeightField& w, double t) {
    if (t < -1e-12 || t > w.T * (1.0 + 1e-12))
        throw DomainError("weight_sigma: time outside [0, T]");
    return w.sigma.eval(t);
}

std::vector<NamedCheck> validate_weight_for_period(const WeightField& w) {
    std::vector<NamedCheck> checks;
    const double s0 = w.sigma.eval(0.0);
    const double sT = w.sigma.eval(w.T);
    checks.push_back({"weight_end_dominates_start", s0 <= sT,
                      "sigma(0) = " + fmt(s0) + ", sigma(T) = " + fmt(sT)});
    return checks;
}

// ---------------------------------------------------------------------------
// CSV loader
// ---------------------------------------------------------------------------

PairMatrix load_pair_csv(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_pair_csv: cannot open " + path);
    PairMatrix m(n, 0.0);
    std::vector<std::uint8_t> seen(static_cast<size_t>(n) * static_cast<size_t>(n), 0);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string si, sj, sv;
        if (!std::getline(row, si, ',') || !std::getline(row, sj, ',') || !std::getline(row, sv))
            throw ConfigError("load_pair_csv: malformed row " + std::to_string(lineno));
        int i, j;
        double v;
        try {
            i = std::stoi(si);
            j = std::stoi(sj);
            v = std::stod(sv);
        } catch (const std::exception&) {
            if (lineno == 1) continue;  // header row
            throw ConfigError("load_pair_csv: unparseable row " + std::to_string(lineno));
        }
        if (i < 0 || j < 0 || i >= n || j >= n || i == j)
            throw ConfigError("load_pair_csv: index out of range at row " + std::to_string(lineno));
        const size_t idx = static_cast<size_t>(i) * static_cast<size_t>(n) + static_cast<size_t>(j);
        const size_t jdx = static_cast<size_t>(j) * static_cast<size_t>(n) + static_cast<size_t>(i);
        if (seen[idx] && !sym_close(m(i, j), v))
            throw DomainError("load_pair_csv: conflicting duplicate for pair (" + si + ", " + sj + ")");
        if (seen[jdx] && !sym_close(m(j, i), v))
            throw DomainError("load_pair_csv: asymmetric beyond 1e-12 at pair (" + si + ", " + sj + ")");
        if (!seen[idx]) m(i, j) = v;
        if (!seen[jdx]) m(j, i) = v;
        seen[idx] = seen[jdx] = 1;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && !seen[static_cast<size_t>(i) * static_cast<size_t>(n) + static_cast<size_t>(j)])
                throw DomainError("load_pair_csv: pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") never provided");
    return m;
}

}  // namespace fracflow
