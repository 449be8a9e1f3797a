#include <string>
#include <vector>

#include "cef/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cef::cli::run(args);
}
