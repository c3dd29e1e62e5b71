#include "fracflow/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fracflow/vnorm.hpp"

namespace fracflow {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- parsing

[[noreturn]] void missing(const std::string& scope, const std::string& key) {
    throw ConfigError("config: missing key " + (scope.empty() ? key : scope + "." + key));
}

const json* opt(const json& j, const std::string& key) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& req(const json& j, const std::string& key, const std::string& scope) {
    const json* v = opt(j, key);
    if (!v) missing(scope, key);
    return *v;
}

double as_num(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError("config: " + where + " must be a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError("config: " + where + " must be an integer");
    return v.get<int>();
}

std::string as_str(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError("config: " + where + " must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) throw ConfigError("config: " + where + " must be a boolean");
    return v.get<bool>();
}

std::vector<double> as_num_array(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError("config: " + where + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& x : v) out.push_back(as_num(x, where + "[]"));
    return out;
}

double num_or(const json& j, const std::string& key, const std::string& scope, double fallback) {
    const json* v = opt(j, key);
    return v ? as_num(*v, scope + "." + key) : fallback;
}

int int_or(const json& j, const std::string& key, const std::string& scope, int fallback) {
    const json* v = opt(j, key);
    return v ? as_int(*v, scope + "." + key) : fallback;
}

bool bool_or(const json& j, const std::string& key, const std::string& scope, bool fallback) {
    const json* v = opt(j, key);
    return v ? as_bool(*v, scope + "." + key) : fallback;
}

TimeProfile parse_time(const json& j, const std::string& scope) {
    const std::string kind = as_str(req(j, "kind", scope), scope + ".kind");
    if (kind == "one") return time_one();
    if (kind == "constant") return time_constant(as_num(req(j, "value", scope), scope + ".value"));
    if (kind == "affine")
        return time_affine(num_or(j, "intercept", scope, 0.0), num_or(j, "slope", scope, 0.0));
    if (kind == "sin")
        return time_sin(num_or(j, "offset", scope, 0.0), num_or(j, "amplitude", scope, 1.0),
                        num_or(j, "freq", scope, 1.0), num_or(j, "phase", scope, 0.0));
    if (kind == "table")
        return time_table(as_num_array(req(j, "t", scope), scope + ".t"),
                          as_num_array(req(j, "v", scope), scope + ".v"));
    throw ConfigError("config: " + scope + ".kind must be one, constant, affine, sin, or table");
}

std::array<double, 4> parse_box(const json& v, const std::string& where) {
    const std::vector<double> b = as_num_array(v, where);
    if (b.size() == 2) return {b[0], b[1], 0.0, 0.0};
    if (b.size() == 4) return {b[0], b[1], b[2], b[3]};
    throw ConfigError("config: " + where + " must have 2 (1d) or 4 (2d) entries");
}

SpaceProfile parse_space(const json& j, const std::string& scope) {
    const std::string kind = as_str(req(j, "kind", scope), scope + ".kind");
    if (kind == "one") return space_one();
    if (kind == "sin_bump") return space_sin_bump();
    if (kind == "gauss")
        return space_gauss(num_or(j, "cx", scope, 0.0), num_or(j, "cy", scope, 0.0),
                           num_or(j, "width", scope, 1.0));
    if (kind == "box") return space_box(parse_box(req(j, "box", scope), scope + ".box"));
    if (kind == "linear")
        return space_linear(num_or(j, "offset", scope, 0.0), num_or(j, "gx", scope, 0.0),
                            num_or(j, "gy", scope, 0.0));
    if (kind == "samples")
        return space_samples(as_num_array(req(j, "values", scope), scope + ".values"));
    throw ConfigError("config: " + scope + ".kind must be one, sin_bump, gauss, box, linear, or samples");
}

// ------------------------------------------------------------ resolved setup

struct Setup {
    std::string raw;
    std::string mode;
    Grid g;
    PairTable t;
    std::optional<SubdomainMask> mask;
    std::optional<WeightField> weight;
    std::string exp_kind;  // constant | tabulated | partial | infinity
    double exp_kappa = 0.0, exp_inner = 0.0;
    std::optional<ExponentField> exponent;  // absent for the infinity kind
    ProblemData data;
    LimitsConfig cfg;
    std::vector<double> schedule;
    int samples = 30;
    bool stepping = false;
    std::string out_dir = "out";
    bool write_traj = true;
};

bool is_stepping_mode(const std::string& m) {
    return m == "cauchy" || m == "periodic" || m == "full_blowup" || m == "periodic_blowup" ||
           m == "partial_blowup";
}

bool is_schedule_mode(const std::string& m) {
    return m == "full_blowup" || m == "periodic_blowup" || m == "partial_blowup" || m == "mosco";
}

PairMatrix parse_pair_matrix(const json& block, const std::string& key, const std::string& scope, int n) {
    const json& v = req(block, key, scope);
    if (v.is_number()) return PairMatrix(n, v.get<double>());
    if (v.is_string()) return load_pair_csv(v.get<std::string>(), n);
    throw ConfigError("config: " + scope + "." + key + " must be a number or a CSV path");
}

Setup build_setup(const std::string& config_path, const CliOverrides& o) {
    Setup s;
    {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ConfigError("config: cannot read " + config_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        s.raw = buf.str();
    }
    json doc;
    try {
        doc = json::parse(s.raw);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }

    const json& experiment = req(doc, "experiment", "");
    s.mode = as_str(req(experiment, "mode", "experiment"), "experiment.mode");
    if (!is_stepping_mode(s.mode) && s.mode != "mosco" && s.mode != "validate")
        throw ConfigError("config: experiment.mode must be cauchy, periodic, full_blowup, "
                          "periodic_blowup, partial_blowup, mosco, or validate");
    s.stepping = is_stepping_mode(s.mode);

    const json& grid = req(doc, "grid", "");
    const int n = as_int(req(grid, "n", "grid"), "grid.n");
    const int dim = int_or(grid, "dim", "grid", 1);
    const double hs = as_num(req(grid, "s", "grid"), "grid.s");
    if (dim == 1) {
        std::array<double, 4> b{0.0, 1.0, 0.0, 0.0};
        if (const json* v = opt(grid, "bounds")) b = parse_box(*v, "grid.bounds");
        s.g = build_interval_grid(n, b[0], b[1]);
    } else if (dim == 2) {
        std::array<double, 4> b{0.0, 1.0, 0.0, 1.0};
        if (const json* v = opt(grid, "bounds")) b = parse_box(*v, "grid.bounds");
        s.g = build_rect_grid(n, int_or(grid, "ny", "grid", n), b);
    } else {
        throw ConfigError("config: grid.dim must be 1 or 2");
    }
    s.t = build_pair_table(s.g, hs);
    const int nodes = s.g.size();

    const json& fields = req(doc, "fields", "");
    if (const json* m = opt(fields, "mask"))
        s.mask = build_mask(s.g, parse_box(req(*m, "region", "fields.mask"), "fields.mask.region"));

    // solver block first so the weight clock can default to the horizon
    double T = 1.0;
    const json* solver = opt(doc, "solver");
    if (s.stepping && !solver) missing("", "solver");
    if (solver) {
        if (s.stepping)
            s.cfg.step.dt = as_num(req(*solver, "dt", "solver"), "solver.dt");
        else
            s.cfg.step.dt = num_or(*solver, "dt", "solver", s.cfg.step.dt);
        T = num_or(*solver, "T", "solver", 1.0);
        s.cfg.step.inner_tol = num_or(*solver, "inner_tol", "solver", 1e-8);
        s.cfg.step.inner_max_iter = int_or(*solver, "inner_max_iter", "solver", 5000);
        s.cfg.step.forcing_point_sample = bool_or(*solver, "point_forcing", "solver", false);
        s.cfg.step.proj_tol = num_or(*solver, "proj_tol", "solver", 1e-10);
        s.cfg.step.proj_max = int_or(*solver, "proj_max", "solver", -1);
        s.cfg.periodic.fp_tol = num_or(*solver, "fp_tol", "solver", 1e-10);
        s.cfg.periodic.fp_max_iter = int_or(*solver, "fp_max_iter", "solver", 200);
        s.cfg.periodic.stall_window = int_or(*solver, "stall_window", "solver", 8);
        s.cfg.periodic.averaging = bool_or(*solver, "averaging", "solver", false);
    }
    s.data.T = T;

    if (const json* w = opt(fields, "weight")) {
        const PairMatrix a = parse_pair_matrix(*w, "a", "fields.weight", nodes);
        TimeProfile sigma = time_one();
        if (const json* sg = opt(*w, "sigma")) sigma = parse_time(*sg, "fields.weight.sigma");
        const double wT = num_or(*w, "T", "fields.weight", T);
        const double a0 =
            num_or(*w, "a0", "fields.weight", a.max_off_diagonal() * sigma.max_on(0.0, wT));
        s.weight = make_weight(a, sigma, a0, wT);
    }

    const json& exponent = req(fields, "exponent", "fields");
    s.exp_kind = as_str(req(exponent, "kind", "fields.exponent"), "fields.exponent.kind");
    if (s.exp_kind == "constant") {
        s.exponent = make_constant_exponent(nodes, as_num(req(exponent, "p", "fields.exponent"),
                                                          "fields.exponent.p"));
    } else if (s.exp_kind == "tabulated") {
        s.exponent = make_tabulated_exponent(parse_pair_matrix(exponent, "pairs", "fields.exponent", nodes));
    } else if (s.exp_kind == "partial") {
        if (!s.mask) missing("fields", "mask");
        s.exp_kappa = as_num(req(exponent, "kappa", "fields.exponent"), "fields.exponent.kappa");
        s.exp_inner = as_num(req(exponent, "inner", "fields.exponent"), "fields.exponent.inner");
        s.exponent = make_partial_exponent(*s.mask, PairMatrix(nodes, s.exp_kappa),
                                           PairMatrix(nodes, s.exp_inner));
    } else if (s.exp_kind != "infinity") {
        throw ConfigError("config: fields.exponent.kind must be constant, tabulated, partial, or infinity");
    }

    if (const json* f = opt(fields, "forcing")) {
        if (!f->is_array()) throw ConfigError("config: fields.forcing must be an array of terms");
        int k = 0;
        for (const json& term : *f) {
            const std::string scope = "fields.forcing[" + std::to_string(k++) + "]";
            Forcing::Term out;
            out.amplitude = num_or(term, "amplitude", scope, 1.0);
            out.space = opt(term, "space") ? parse_space(*opt(term, "space"), scope + ".space")
                                           : space_one();
            out.time = opt(term, "time") ? parse_time(*opt(term, "time"), scope + ".time") : time_one();
            s.data.forcing.terms.push_back(std::move(out));
        }
    }

    s.cfg.seed = static_cast<std::uint64_t>(
        std::llround(num_or(experiment, "seed", "experiment", 1234.0)));
    if (o.seed) s.cfg.seed = *o.seed;  // before any sampled field consumes it
    if (const json* u0 = opt(fields, "u0")) {
        const std::string kind = as_str(req(*u0, "kind", "fields.u0"), "fields.u0.kind");
        if (kind == "zero") {
            s.data.u0.assign(static_cast<size_t>(nodes), 0.0);
        } else if (kind == "values") {
            s.data.u0 = as_num_array(req(*u0, "values", "fields.u0"), "fields.u0.values");
            if (static_cast<int>(s.data.u0.size()) != nodes)
                throw ConfigError("config: fields.u0.values must have one entry per node");
        } else if (kind == "profile") {
            s.data.u0 = sample_profile(s.g, parse_space(req(*u0, "space", "fields.u0"), "fields.u0.space"),
                                       num_or(*u0, "amplitude", "fields.u0", 1.0));
        } else if (kind == "bounded_sample") {
            Rng rng = Rng(s.cfg.seed).fork("u0");
            s.data.u0 = sample_bounded_quotient_state(s.g, s.t, num_or(*u0, "p_min", "fields.u0", 4.0), rng);
        } else {
            throw ConfigError("config: fields.u0.kind must be zero, values, profile, or bounded_sample");
        }
    } else {
        s.data.u0.assign(static_cast<size_t>(nodes), 0.0);
    }

    if (const json* sched = opt(experiment, "schedule"))
        s.schedule = as_num_array(*sched, "experiment.schedule");
    if (is_schedule_mode(s.mode) && s.schedule.empty()) missing("experiment", "schedule");
    s.samples = int_or(experiment, "samples", "experiment", 30);
    s.cfg.threads = int_or(experiment, "threads", "experiment", 1);
    s.cfg.eps_to_one = num_or(experiment, "eps_to_one", "experiment", 0.1);
    s.cfg.vi_samples = int_or(experiment, "vi_samples", "experiment", 30);
    s.cfg.vi_perturbation = num_or(experiment, "vi_perturbation", "experiment", 0.1);
    s.cfg.membership_tol = num_or(experiment, "membership_tol", "experiment", 1e-8);
    s.cfg.w12_trigger_tol = num_or(experiment, "w12_trigger_tol", "experiment", 1e-6);
    s.cfg.liminf_tol = num_or(experiment, "liminf_tol", "experiment", 1e-6);
    s.cfg.liminf_delta0 = num_or(experiment, "liminf_delta0", "experiment", 1e-6);
    s.cfg.divergence_threshold = num_or(experiment, "divergence_threshold", "experiment", 1e6);

    if (const json* output = opt(doc, "output")) {
        if (const json* d = opt(*output, "directory"))
            s.out_dir = as_str(*d, "output.directory");
        s.write_traj = bool_or(*output, "trajectories", "output", true);
    }

    if (o.out_dir) s.out_dir = *o.out_dir;
    if (o.threads) s.cfg.threads = *o.threads;
    return s;
}

// mode-specific completeness gates beyond plain parsing
void check_mode_blocks(const Setup& s) {
    if (s.mode == "partial_blowup" || (s.mode == "mosco" && s.exp_kind == "partial")) {
        if (s.exp_kind != "partial")
            throw ConfigError("config: partial_blowup needs fields.exponent.kind = partial");
        if (!s.mask) missing("fields", "mask");
    }
    if (s.mode == "periodic_blowup" && !s.weight) missing("fields", "weight");
    if ((s.mode == "full_blowup" || s.mode == "periodic_blowup" ||
         (s.mode == "mosco" && s.exp_kind != "partial")) &&
        !(s.exp_kind == "constant" || s.exp_kind == "tabulated"))
        throw ConfigError("config: mode " + s.mode + " needs a constant or tabulated exponent base");
    if ((s.mode == "cauchy" || s.mode == "periodic") && s.exp_kind == "partial" && !s.mask)
        missing("fields", "mask");
}

FunctionalSpec single_spec(const Setup& s) {
    if (s.exp_kind == "infinity")
        return s.weight ? make_indicator_kt(s.g, s.t, *s.weight) : make_indicator_kinf(s.g, s.t);
    if (s.exp_kind == "partial") return make_mixed(s.g, s.t, *s.exponent);
    if (s.weight) {
        if (!s.exponent->is_constant())
            throw ConfigError("config: a weighted flow needs a constant exponent");
        return make_weighted_constant_p(s.g, s.t, *s.weight, s.exponent->constant_value());
    }
    return make_variable_p(s.g, s.t, *s.exponent);
}

ExponentSequence sequence_for(const Setup& s) {
    if (s.exp_kind == "partial")
        return make_partial_blowup_sequence(*s.mask, PairMatrix(s.g.size(), s.exp_kappa),
                                            PairMatrix(s.g.size(), s.exp_inner), s.schedule);
    return make_full_blowup_sequence(*s.exponent, s.schedule);
}

// ---------------------------------------------------------------- output

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json jnum(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0.0 ? "inf" : "-inf";
}

struct Emitter {
    std::filesystem::path dir;
    std::vector<std::string> files;

    void text(const std::string& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        out << content;
        if (!out) throw ConfigError("output: cannot write " + (dir / name).string());
        files.push_back(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
};

std::string trajectory_csv(const Grid& g, const Trajectory& traj) {
    std::string out = "t,energy";
    for (int i = 0; i < g.size(); ++i) out += ",u_" + std::to_string(i);
    out += "\n";
    for (size_t k = 0; k < traj.states.size(); ++k) {
        out += fmt(traj.times[k]) + "," + fmt(traj.energies[k]);
        for (double v : traj.states[k]) out += "," + fmt(v);
        out += "\n";
    }
    return out;
}

std::string summary_csv(const ConvergenceReport& rep, bool with_energy_dist) {
    std::string out = "j,p_minus,sup_t_dist,sqrt_t_w12_dist,w12_dist,recovery_margin";
    if (with_energy_dist) out += ",energy_dist";
    out += "\n";
    for (size_t j = 0; j < rep.stages.size(); ++j) {
        const StageMetrics& m = rep.stages[j];
        out += std::to_string(j) + "," + fmt(m.p_minus) + "," + fmt(m.sup_dist) + "," +
               fmt(m.sqrt_t_w12_dist) + "," + fmt(m.w12_dist) + "," + fmt(m.recovery_margin);
        if (with_energy_dist) out += "," + fmt(m.energy_dist);
        out += "\n";
    }
    return out;
}

json diag_json(const LimitDiagnostics& d, bool partial) {
    json out{{"membership_ok", d.membership_ok},
             {"membership_worst", jnum(d.membership_worst)},
             {"vi_worst", jnum(d.vi_worst)}};
    if (partial) {
        out["complement_residual"] = jnum(d.complement_residual);
        out["interior_margin_min"] = jnum(d.interior_margin_min);
        out["quasi_vi_worst"] = jnum(d.quasi_vi_worst);
    }
    return out;
}

json stages_json(const ConvergenceReport& rep, bool with_energy_dist) {
    json arr = json::array();
    for (size_t j = 0; j < rep.stages.size(); ++j) {
        const StageMetrics& m = rep.stages[j];
        json row{{"j", j},
                 {"p_minus", jnum(m.p_minus)},
                 {"sup_t_dist", jnum(m.sup_dist)},
                 {"sqrt_t_w12_dist", jnum(m.sqrt_t_w12_dist)},
                 {"w12_dist", jnum(m.w12_dist)},
                 {"energy_at_start", jnum(m.energy_at_start)},
                 {"recovery_margin", jnum(m.recovery_margin)},
                 {"solved", m.solved}};
        if (with_energy_dist) row["energy_dist"] = jnum(m.energy_dist);
        arr.push_back(std::move(row));
    }
    return arr;
}

void emit_stage_trajectories(Emitter& em, const Setup& s, const ConvergenceReport& rep) {
    if (!s.write_traj) return;
    em.text("limit_trajectory.csv", trajectory_csv(s.g, rep.limit));
    for (size_t j = 0; j < rep.stages.size(); ++j)
        if (rep.stages[j].solved)
            em.text("stage_" + std::to_string(j) + "_trajectory.csv",
                    trajectory_csv(s.g, rep.stages[j].traj));
}

json step_stats_json(const Trajectory& traj) {
    int max_inner = 0;
    long sweeps = 0;
    double worst_residual = 0.0;
    for (const StepStats& st : traj.stats) {
        max_inner = std::max(max_inner, st.inner_iterations);
        sweeps += st.projection_sweeps;
        worst_residual = std::max(worst_residual, st.residual);
    }
    return json{{"steps", traj.steps()},
                {"max_inner_iterations", max_inner},
                {"projection_sweeps", sweeps},
                {"worst_residual", jnum(worst_residual)}};
}

// ------------------------------------------------------------- mode runners

int exit_code_for(const std::exception& e, std::string& kind) {
    if (dynamic_cast<const ConfigError*>(&e)) return kind = "config", 2;
    if (dynamic_cast<const DomainError*>(&e)) return kind = "domain", 2;
    if (dynamic_cast<const NonConvergenceError*>(&e)) return kind = "non_convergence", 3;
    if (dynamic_cast<const OverflowError*>(&e)) return kind = "overflow", 4;
    kind = "internal";
    return 1;
}

int exit_code_for_kind(const std::string& kind) {
    if (kind == "config" || kind == "domain") return 2;
    if (kind == "non_convergence") return 3;
    if (kind == "overflow") return 4;
    return 1;
}

std::vector<NamedCheck> run_validation_suite(const Setup& s);

/// Executes the resolved experiment, filling `report`; returns the exit code.
int dispatch(const Setup& s, Emitter& em, json& report) {
    if (s.mode == "cauchy") {
        const FunctionalSpec spec = single_spec(s);
        const Trajectory traj = solve_cauchy(spec, s.data, s.cfg.step);
        if (s.write_traj) em.text("trajectory.csv", trajectory_csv(s.g, traj));
        report = json{{"mode", s.mode},
                      {"final_time", jnum(traj.times.back())},
                      {"final_norm_h", jnum(norm_h(s.g, traj.back()))},
                      {"energy_first", jnum(traj.energies.front())},
                      {"energy_last", jnum(traj.energies.back())},
                      {"solver", step_stats_json(traj)}};
        return 0;
    }
    if (s.mode == "periodic") {
        const FunctionalSpec spec = single_spec(s);
        PeriodicReport prep;
        const Trajectory traj = solve_periodic(spec, s.data, s.cfg.step, s.cfg.periodic, &prep);
        if (s.write_traj) em.text("trajectory.csv", trajectory_csv(s.g, traj));
        report = json{{"mode", s.mode},
                      {"final_norm_h", jnum(norm_h(s.g, traj.back()))},
                      {"orbit_iterations", prep.iterations},
                      {"orbit_gap", jnum(prep.gap)},
                      {"used_averaging", prep.used_averaging},
                      {"solver", step_stats_json(traj)}};
        return 0;
    }
    if (s.mode == "full_blowup" || s.mode == "periodic_blowup" || s.mode == "partial_blowup") {
        const ExponentSequence seq = sequence_for(s);
        ConvergenceReport rep;
        if (s.mode == "full_blowup")
            rep = run_full_blowup(s.g, s.t, seq, s.weight, s.data, s.cfg);
        else if (s.mode == "periodic_blowup")
            rep = run_periodic_blowup(s.g, s.t, seq, *s.weight, s.data, s.cfg);
        else
            rep = run_partial_blowup(s.g, s.t, seq, s.data, s.cfg);

        const bool partial = s.mode == "partial_blowup";
        em.text("summary.csv", summary_csv(rep, partial));
        emit_stage_trajectories(em, s, rep);
        report = json{{"mode", s.mode},
                      {"sup_monotone", rep.sup_monotone},
                      {"w12_triggered", rep.w12_triggered},
                      {"diagnostics", diag_json(rep.diag, partial)},
                      {"stages", stages_json(rep, partial)}};
        if (!rep.ok()) {
            report["failure"] = rep.failure;
            report["failed_stage"] = rep.failed_stage;
            report["failure_kind"] = rep.failure_kind;
            return exit_code_for_kind(rep.failure_kind);
        }
        return 0;
    }
    if (s.mode == "mosco") {
        const MoscoReport rep = mosco_diagnostics(s.g, s.t, sequence_for(s), s.samples, s.cfg);
        json recovery = json::array();
        for (const RecoveryProbe& r : rep.recovery)
            recovery.push_back(
                {{"p_minus", jnum(r.p_minus)}, {"worst_value", jnum(r.worst_value)}, {"bound", jnum(r.bound)}});
        json liminf = json::array();
        for (const LiminfProbe& p : rep.liminf)
            liminf.push_back({{"delta", jnum(p.delta)}, {"value", jnum(p.value)}, {"finite", p.finite}});
        json infeasible = json::array();
        for (double v : rep.infeasible_values) infeasible.push_back(jnum(v));
        report = json{{"mode", s.mode},
                      {"recovery", std::move(recovery)},
                      {"limit_value", jnum(rep.limit_value)},
                      {"liminf", std::move(liminf)},
                      {"liminf_tail", jnum(rep.liminf_tail)},
                      {"liminf_ok", rep.liminf_ok},
                      {"infeasible_values", std::move(infeasible)},
                      {"infeasible_diverged", rep.infeasible_diverged}};
        return 0;
    }
    // validate mode: run the suite, report pass/fail per check
    const std::vector<NamedCheck> checks = run_validation_suite(s);
    json arr = json::array();
    for (const NamedCheck& c : checks)
        arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    report = json{{"mode", s.mode}, {"checks", std::move(arr)}, {"all_pass", all_pass(checks)}};
    return all_pass(checks) ? 0 : 2;
}

// ------------------------------------------------------------- validation

NamedCheck check(const std::string& name, bool pass, const std::string& detail) {
    return NamedCheck{name, pass, detail};
}

std::vector<NamedCheck> run_validation_suite(const Setup& s) {
    std::vector<NamedCheck> out;
    const Grid& g = s.g;
    const PairTable& t = s.t;

    double hmin = g.weight.empty() ? 0.0 : g.weight[0];
    for (double h : g.weight) hmin = std::min(hmin, h);
    out.push_back(check("grid_weights_positive", hmin > 0.0, "min h = " + fmt(hmin)));
    out.push_back(check("pair_distances_symmetric", t.dist.asymmetry() == 0.0,
                        "asymmetry " + fmt(t.dist.asymmetry())));
    out.push_back(check("pair_measure_positive", t.mu.min_off_diagonal() > 0.0,
                        "min mu = " + fmt(t.mu.min_off_diagonal())));

    if (s.exponent)
        out.push_back(check("exponent_exceeds_one", s.exponent->p_minus > 1.0,
                            "range [" + fmt(s.exponent->p_minus) + ", " + fmt(s.exponent->p_plus) + "]"));
    if (s.weight)
        for (const NamedCheck& c : validate_weight_for_period(*s.weight)) out.push_back(c);
    if (!s.schedule.empty() && s.exp_kind != "infinity") {
        const ExponentSequence seq = sequence_for(s);
        for (const NamedCheck& c : validate_sequence(seq, s.cfg.eps_to_one)) out.push_back(c);
    }

    Rng rng = Rng(s.cfg.seed).fork("validate");
    NodalVector u(static_cast<size_t>(g.size()));
    for (double& x : u) x = 0.1 * rng.normal();

    if (s.exp_kind != "infinity") {
        const FunctionalSpec spec = s.exp_kind == "partial" ? make_mixed(g, t, *s.exponent)
                                                            : single_spec(s);
        const NodalVector gr = grad(spec, u, 0.0);
        double worst = 0.0;
        for (int probe = 0; probe < 3; ++probe) {
            const int i = rng.index(g.size());
            const double h = 1e-6;
            NodalVector up = u, dn = u;
            up[static_cast<size_t>(i)] += h;
            dn[static_cast<size_t>(i)] -= h;
            const double fd =
                (eval(spec, up, 0.0).value - eval(spec, dn, 0.0).value) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - gr[static_cast<size_t>(i)]) /
                                        (1.0 + std::abs(fd)));
        }
        out.push_back(check("gradient_matches_finite_differences", worst <= 1e-5,
                            "worst relative gap " + fmt(worst)));

        if (s.exponent) {
            const double lux = luxemburg(t, *s.exponent, u);
            const double rho = lux > 0.0 ? scaled_modular(t, *s.exponent, u, lux) : 1.0;
            out.push_back(check("seminorm_on_unit_modular_shell", std::abs(rho - 1.0) <= 1e-8,
                                "modular at the seminorm " + fmt(rho)));
        }
    }

    {
        const FunctionalSpec spec = single_spec(s);
        StepConfig step = s.cfg.step;
        if (!(step.dt > 0.0)) step.dt = 1.0 / 64.0;
        NodalVector u0 = u;
        if (spec.has_constraint_part()) u0 = project(constraint_set(spec, 0.0), u0);
        const NodalVector zero(u0.size(), 0.0);
        const StepResult res = implicit_step(spec, u0, step.dt, zero, step);
        Ksum before, after;
        for (size_t i = 0; i < u0.size(); ++i) {
            before.add(u0[i] * g.weight[i]);
            after.add(res.u[i] * g.weight[i]);
        }
        const double drift = std::abs(after.value() - before.value());
        out.push_back(check("step_conserves_weighted_mean",
                            drift <= 1e-9 * (1.0 + std::abs(before.value())), "drift " + fmt(drift)));
        const double e0 = eval_guarded(spec, u0, 0.0).value;
        const double e1 = eval_guarded(spec, res.u, step.dt).value;
        out.push_back(check("step_dissipates_energy", e1 <= e0 + 1e-10 * (1.0 + std::abs(e0)),
                            fmt(e0) + " -> " + fmt(e1)));
    }
    return out;
}

std::string hash_hex(const std::string& raw) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(raw)));
    return buf;
}

// ------------------------------------------------------------- describing

std::string mode_summary(const std::string& mode) {
    if (mode == "cauchy") return "one initial-value flow";
    if (mode == "periodic") return "one periodic orbit by fixed-point iteration";
    if (mode == "full_blowup") return "growing-exponent flows against the constrained limit flow";
    if (mode == "periodic_blowup") return "growing-exponent periodic orbits against the constrained orbit";
    if (mode == "partial_blowup") return "subdomain blow-up flows against the mixed constrained flow";
    if (mode == "mosco") return "recovery, liminf, and divergence probes of the energy family";
    return "property suite over the configured objects";
}

}  // namespace

RunOutcome run_experiment(const std::string& config_path, const CliOverrides& overrides) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome out;
    Setup s;
    try {
        s = build_setup(config_path, overrides);
        check_mode_blocks(s);
    } catch (const std::exception& e) {
        out.exit_code = exit_code_for(e, out.error_kind);
        out.message = e.what();
        return out;
    }
    out.out_dir = s.out_dir;

    Emitter em{std::filesystem::path(s.out_dir), {}};
    std::error_code ec;
    std::filesystem::create_directories(em.dir, ec);
    if (ec) {
        out.exit_code = 2;
        out.error_kind = "config";
        out.message = "output: cannot create directory " + s.out_dir;
        return out;
    }

    json report;
    try {
        out.exit_code = dispatch(s, em, report);
        em.json_file("report.json", report);
    } catch (const std::exception& e) {
        out.exit_code = exit_code_for(e, out.error_kind);
        out.message = e.what();
        em.json_file("error.json", json{{"error", out.error_kind}, {"message", out.message}});
        out.files = em.files;
        return out;
    }
    if (out.exit_code != 0) {
        out.error_kind = report.contains("failure_kind") ? report["failure_kind"].get<std::string>()
                                                         : std::string("validation");
        out.message = report.contains("failure") ? report["failure"].get<std::string>()
                                                 : std::string("validation checks failed");
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const json manifest{{"config_path", config_path}, {"config_hash", hash_hex(s.raw)},
                        {"mode", s.mode},           {"version", kVersion},
                        {"seed", s.cfg.seed},       {"threads", s.cfg.threads},
                        {"wall_seconds", wall},     {"files", em.files}};
    em.json_file("manifest.json", manifest);
    em.files.pop_back();  // the manifest indexes the others, it does not list itself
    out.files = em.files;
    return out;
}

std::string describe_experiment(const std::string& config_path) {
    const Setup s = build_setup(config_path, {});
    check_mode_blocks(s);
    std::ostringstream out;
    out << "mode: " << s.mode << " (" << mode_summary(s.mode) << ")\n";
    out << "grid: " << s.g.size() << " nodes, dim " << s.g.dim << ", s = " << s.t.s << ", "
        << s.g.size() * (s.g.size() - 1) << " ordered pairs\n";
    if (s.mask)
        out << "subdomain: " << s.mask->inside_count << " nodes inside, "
            << s.mask->interior_pair_count() << " interior pairs, " << s.mask->exterior_pair_count()
            << " complement pairs\n";
    if (s.stepping) {
        const long steps = std::lround(s.data.T / s.cfg.step.dt);
        out << "steps: " << steps << " of dt = " << s.cfg.step.dt << " over T = " << s.data.T << "\n";
    }
    if (s.weight)
        out << "weight: pair factor in [" << s.weight->a.min_off_diagonal() << ", "
            << s.weight->a.max_off_diagonal() << "], envelope a0 = " << s.weight->a0 << "\n";
    out << "forcing: " << s.data.forcing.terms.size() << " term(s)\n";

    if (is_schedule_mode(s.mode)) {
        const ExponentSequence seq = sequence_for(s);
        out << "stages: " << seq.stages.size() << "\n";
        for (size_t j = 0; j < seq.stages.size(); ++j) {
            const ExponentField& f = seq.stages[j];
            out << "  j " << j << ": exponent in [" << f.p_minus << ", " << f.p_plus << "]";
            if (f.kind == ExponentField::Kind::Partial)
                out << ", interior in [" << f.inner_minus << ", " << f.inner_plus << "]";
            out << "\n";
        }
        if (s.mode == "partial_blowup")
            out << "limit: mixed flow, interior differences capped, exponent "
                << s.exp_kappa << " elsewhere\n";
        else if (s.mode != "mosco")
            out << "limit: " << (s.weight ? "time-weighted" : "unit") << " quotient-bound indicator flow\n";
    } else if (s.exp_kind == "infinity") {
        out << "single stage: " << (s.weight ? "time-weighted" : "unit")
            << " quotient-bound indicator flow\n";
    } else if (s.exponent) {
        out << "single stage: exponent in [" << s.exponent->p_minus << ", " << s.exponent->p_plus
            << "]\n";
    }
    out << "output: " << s.out_dir << "\n";
    return out.str();
}

std::vector<NamedCheck> validate_experiment(const std::string& config_path,
                                            const CliOverrides& overrides) {
    Setup s = build_setup(config_path, overrides);
    check_mode_blocks(s);
    return run_validation_suite(s);
}

int harness_main(int argc, const char* const* argv) {
    CLI::App app{"desk-scale laboratory for nonlocal variable-exponent diffusion"};
    app.require_subcommand(1);

    std::string config;
    CliOverrides overrides;
    std::string out_dir;
    int threads = 0;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool with_overrides) {
        sub->add_option("--config", config, "experiment config (JSON)")->required();
        if (with_overrides) {
            sub->add_option("--out", out_dir, "output directory override");
            sub->add_option("--threads", threads, "stage fan-out override");
            sub->add_option("--seed", seed, "seed override");
        }
    };
    CLI::App* run_cmd = app.add_subcommand("run", "execute the experiment and write artifacts");
    add_common(run_cmd, true);
    CLI::App* describe_cmd = app.add_subcommand("describe", "print the resolved plan");
    add_common(describe_cmd, false);
    CLI::App* validate_cmd = app.add_subcommand("validate", "run the property suite");
    add_common(validate_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    auto fill = [&](CLI::App* sub) {
        if (sub->count("--out")) overrides.out_dir = out_dir;
        if (sub->count("--threads")) overrides.threads = threads;
        if (sub->count("--seed")) overrides.seed = seed;
    };

    try {
        if (run_cmd->parsed()) {
            fill(run_cmd);
            const RunOutcome outcome = run_experiment(config, overrides);
            if (outcome.exit_code == 0) {
                std::cout << "wrote " << outcome.files.size() + 1 << " files to " << outcome.out_dir
                          << "\n";
            } else {
                std::cerr << "error (" << outcome.error_kind << "): " << outcome.message << "\n";
            }
            return outcome.exit_code;
        }
        if (describe_cmd->parsed()) {
            std::cout << describe_experiment(config);
            return 0;
        }
        fill(validate_cmd);
        const std::vector<NamedCheck> checks = validate_experiment(config, overrides);
        for (const NamedCheck& c : checks)
            std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
                      << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
        return all_pass(checks) ? 0 : 2;
    } catch (const std::exception& e) {
        std::string kind;
        const int code = exit_code_for(e, kind);
        std::cerr << "error (" << kind << "): " << e.what() << "\n";
        return code;
    }
}

}  // namespace fracflow
