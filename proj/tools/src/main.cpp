#include <iostream>

#include "pseg/cli.hpp"

int main(int argc, char** argv) {
  return pseg::cli::dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
