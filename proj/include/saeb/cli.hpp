#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace saeb {

inline constexpr const char* kEngineVersion = "0.3.0";

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitConvergence = 3,
};

struct CliOptions {
  /// Let SAEB_SEED override --seed (disabled when replaying a manifest).
  bool allow_env_seed = true;
};

/// Runs `saeb <command> [flags]`; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliOptions& options = {});

/// Lower-case hex SHA-256 of a file's bytes / of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& data);

}  // namespace saeb
