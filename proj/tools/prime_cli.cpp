#include <string>
#include <vector>

#include "prime/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return prime::cli::run(args);
}
