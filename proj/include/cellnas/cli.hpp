#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cellnas {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,       // bad flags, unreadable or unparsable input
    kExitValidation = 2,  // input parsed but violates a contract
    kExitDivergence = 3,  // a training run produced a non-finite loss
    kExitViolation = 4,   // a theorem bound was exceeded
};

/// Runs one CLI invocation. `args` excludes the program name. Normal output
/// goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Manifest written next to `--out FILE` (as FILE.manifest.json) or inside
/// `--out-dir DIR` (as DIR/manifest.json).
std::filesystem::path manifest_path_for_file(const std::filesystem::path& artifact);

/// Manifests under `dir` (recursive), sorted by path.
std::vector<std::filesystem::path> find_manifests(const std::filesystem::path& dir);

}  // namespace cellnas
