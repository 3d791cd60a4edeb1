#pragma once

#include <string>
#include <vector>

namespace smile::cli {

/// Full command dispatch. Exit codes: 0 success, 2 usage error,
/// 3 validation/configuration error, 4 training divergence.
int run(int argc, const char* const* argv);

/// Test-friendly overload; `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace smile::cli
