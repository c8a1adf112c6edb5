// Exports the generated benchmark corpus as asset files under bench/.
#include <iostream>

#include "flipforge/benchmarks.hpp"

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "bench";
  flipforge::BenchmarkSuite suite = flipforge::build_suite();
  flipforge::write_suite(suite, dir);
  auto checks = flipforge::verify_goldens(suite);
  bool ok = true;
  for (auto& c : checks) {
    std::cout << (c.pass ? "ok   " : "FAIL ") << c.benchmark;
    if (!c.detail.empty()) std::cout << "  " << c.detail;
    std::cout << "\n";
    ok &= c.pass;
  }
  return ok ? 0 : 1;
}
