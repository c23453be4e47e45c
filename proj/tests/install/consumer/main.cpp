#include <cstdio>
#include "gridgin/contingency.hpp"
#include "gridgin/grid_io.hpp"
int main(int, char** argv) {
  const auto g = gridgin::read_grid(argv[1]);
  std::printf("%d\n", gridgin::label_n1(g).label);
}
