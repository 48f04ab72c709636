#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qwgan::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kInfeasible = 3,
  kNumeric = 4,
  kCheckFailed = 5,
};

/// args excludes the program name. Reports go to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qwgan::cli
