#include <string>
#include <vector>

#include "cmap_cli.hpp"

int main(int argc, char** argv) {
  return cmap::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
