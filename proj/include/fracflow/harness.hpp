#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fracflow/limits.hpp"

namespace fracflow {

/// Command-line values layered over the config file.
struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

/// One `run` invocation: the process exit code (0 ok, 2 config or domain
/// rejection, 3 solver non-convergence, 4 overflow guard) plus everything
/// written under `out_dir`. Failures after the output directory is known
/// leave a machine-readable error.json there.
struct RunOutcome {
    int exit_code = 0;
    std::string error_kind;  // empty on success
    std::string message;
    std::string out_dir;
    std::vector<std::string> files;  // as recorded in manifest.json
};

RunOutcome run_experiment(const std::string& config_path, const CliOverrides& overrides = {});

/// Resolved plan as printable text: grid, stages, pair and step counts.
/// Throws ConfigError when the file does not parse or resolve.
std::string describe_experiment(const std::string& config_path);

/// The property suite against the configured objects: grid sanity, field
/// validators, a gradient probe, norm consistency, one conservation and
/// dissipation step. Pure report; the caller decides the exit code.
std::vector<NamedCheck> validate_experiment(const std::string& config_path,
                                            const CliOverrides& overrides = {});

/// Full CLI: run / describe / validate with --config, --out, --threads, --seed.
int harness_main(int argc, const char* const* argv);

}  // namespace fracflow
