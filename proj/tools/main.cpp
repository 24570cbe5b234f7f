#include <iostream>
#include <string>
#include <vector>

#include "genrestat/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return genrestat::cli::run_cli(args, std::cout, std::cerr);
}
