#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace flowlab {

// Entry point shared by the flowlab binary and the in-process CLI tests.
// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline int run_cli(const std::vector<std::string>& args) {
  (void)args;
  std::cerr << "flowlab: not yet wired\n";
  return 1;
}

}  // namespace flowlab
