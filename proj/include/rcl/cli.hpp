#pragma once

#include <ostream>

namespace rcl {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // configuration or argument errors, missing inputs
inline constexpr int kExitRuntime = 2;  // failures while running

// Environment variable that overrides output_dir.
inline constexpr const char* kOutputDirEnv = "RCL_OUTPUT_DIR";

/// Entry point of the `rcl` tool: gen-data, train, evaluate, cka, probe,
/// sweep and report. Every command writes only under the configured output
/// directory and records its files in <command>_manifest.json there.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rcl
