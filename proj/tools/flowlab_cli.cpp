#include <vector>

#include "flowlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return flowlab::run_cli(args);
}
