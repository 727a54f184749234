#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cantor_forge/rational.hpp"

namespace cantor {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    bool timing = false; ///< adds wall-clock timing, which makes reports non-reproducible
};

/// Exit codes: 0 success, 1 usage/config error, 2 certificate or verification failure.
struct RunOutcome {
    json report;
    int exit_code = 0;
};

RunOutcome run_scenario(const json& config, const RunOptions& opt = {});
/// Reads and parses the file first; unreadable or malformed JSON gives exit code 1.
RunOutcome run_scenario_file(const std::string& path, const RunOptions& opt = {});

/// Pretty JSON text with a trailing newline; byte-stable for equal values.
std::string report_text(const json& report);

/// CSV from a run report's "geometry" block or from a bare gap-tree JSON.
/// `level` overrides the interval level for trees. Throws KindMismatch.
std::string emit_geometry(const json& report_or_tree, const std::string& format, std::optional<int> level = {});

} // namespace cantor
