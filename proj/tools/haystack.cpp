#include <iostream>

#include "haystack/cli.hpp"

int main(int argc, char** argv) {
  return haystack::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
