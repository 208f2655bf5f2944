#pragma once

// Command implementations behind the CLI and the Python module. Every command
// returns a process exit status: 0 success, 1 runtime failure or failed
// property, 2 usage or configuration error.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smcprog/llm.hpp"

namespace smcprog {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kDiagnosticsFile = "diagnostics.json";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kErrorFile = "error.json";

struct RunOptions {
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    /// Overrides the config's run_dir; defaults to runs/seed-<seed>.
    std::optional<std::filesystem::path> run_dir;
    /// Stop after this epoch without writing run_end, as if killed.
    std::optional<int> stop_after_epoch;
    /// Test hook replacing the HTTP transport.
    std::shared_ptr<HttpTransport> transport;
};

int cmd_run(const std::filesystem::path& config_path, const RunOptions& options, std::ostream& out, std::ostream& err);
int cmd_resume(const std::filesystem::path& run_dir, const RunOptions& options, std::ostream& out, std::ostream& err);

/// Suites: invariance, ergodicity, bridge, theorem1, all. Prints one line per property.
int cmd_oracle_check(const std::string& suite, std::ostream& out, std::ostream& err,
                     const std::optional<std::filesystem::path>& report = std::nullopt);

/// what: schedule, kernels, flow, best-curve or all. Writes CSV files under run_dir/export.
int cmd_export(const std::filesystem::path& run_dir, const std::string& what, std::ostream& out, std::ostream& err);

/// Pure projections of an event log.
[[nodiscard]] nlohmann::json summarize_events(const std::vector<nlohmann::json>& events);
[[nodiscard]] nlohmann::json diagnostics_from_events(const std::vector<nlohmann::json>& events);

/// Export files written for a given kind.
[[nodiscard]] std::vector<std::string> export_files(const std::string& what);
/// Writes export CSVs; throws Error(MissingRun | CorruptLog | InvalidArgument).
std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir, const std::string& what);

}  // namespace smcprog
