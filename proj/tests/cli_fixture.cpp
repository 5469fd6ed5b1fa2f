// Writes small field containers for the command-line contract test.
#include <fstream>
#include <iostream>

#include "pph/grid.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: cli_fixture DIR\n";
    return 2;
  }
  const std::string dir = argv[1];
  auto g = pph::TorusGrid::make(1, 10);
  pph::write_field(dir + "/zero.pph", pph::SampledField(g));
  pph::write_field(dir + "/mode16.pph", pph::lattice_mode(g, 16));
  std::ofstream bad(dir + "/bad.pph", std::ios::binary);
  bad << "NOPE0000000000000";
  return 0;
}
