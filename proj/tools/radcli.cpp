#include "rad/harness.hpp"

int main(int argc, char** argv) {
  return rad::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
