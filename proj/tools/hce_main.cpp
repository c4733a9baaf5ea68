#include <iostream>
#include <string>
#include <vector>

#include "hce/common/alloc.hpp"
#include "hce/tool/cli.hpp"

int main(int argc, char** argv) {
  hce::retain_heap_memory();
  return hce::tool::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
