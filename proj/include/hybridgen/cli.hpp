#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace hybridgen {

inline constexpr std::string_view kVersion = "0.1.0";

namespace cli {

enum ExitCode : int { ok = 0, failure = 1, usage = 2 };

// Fixed artifact names inside an output directory.
inline constexpr std::string_view kConfigCopyName = "config.json";
inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kMetricsReportName = "metrics.report";
inline constexpr std::string_view kDirectionsName = "directions.uhdv";
inline constexpr std::string_view kSamplesDirName = "samples";
inline constexpr std::string_view kLockName = ".lock";

/// Parses "0,0.5,1" into finite values; throws InvalidInputError otherwise.
std::vector<double> parse_grid(std::string_view text);

/// Entry point of the hybridgen tool: adapt | compose | eval | sample.
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cli
}  // namespace hybridgen
