#include <iostream>

#include "velocorr/cli.hpp"

int main(int argc, char** argv) {
  return velocorr::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
