#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sdemem::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kTuningFailure = 3,
  kRuntimeDegeneracy = 4,
};

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sdemem::cli
