#include <string>
#include <vector>

#include "celltrain/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return celltrain::run_cli(std::move(args));
}
