#pragma once

#include <iosfwd>

namespace xray::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInputError = 2,  // parse or validation failure
  kViolations = 3,
};

// Runs one `xray` invocation. Primary output goes to `out` unless --out is
// given; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xray::cli
