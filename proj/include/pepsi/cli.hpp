#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pepsi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand (maskgen, train, infer, eval, audit-params, gradcheck,
/// synth). `args` excludes the program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, char** argv);

}  // namespace pepsi
