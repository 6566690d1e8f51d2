#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "graze/cli/config.hpp"

namespace graze::cli {

// exit codes shared by all subcommands
inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 1;
inline constexpr int exit_model = 2;
inline constexpr int exit_integrator = 3;
inline constexpr int exit_stall = 4;
inline constexpr int exit_no_grazing = 5;

struct cli_env {
  std::string out_dir = ".";
  int jobs = 0;
  std::optional<std::uint64_t> seed_override;
};

int cmd_simulate(const run_config& cfg, const cli_env& env);
int cmd_family(const run_config& cfg, const cli_env& env);
int cmd_grazing_report(const run_config& cfg, const cli_env& env);
int cmd_chaos_report(const run_config& cfg, const cli_env& env);

/// Full front end: subcommand + flags. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace graze::cli
