#include "grid_util.hpp"

#include <numeric>

#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop::detail {

Cell apply_move(Cell from, int act, int width, int height) {
  Cell to = from;
  switch (act) {
    case action::kLeft: to.x -= 1; break;
    case action::kRight: to.x += 1; break;
    case action::kUp: to.y -= 1; break;
    case action::kDown: to.y += 1; break;
    default: return from;
  }
  if (to.x < 0 || to.x >= width || to.y < 0 || to.y >= height) return from;
  return to;
}

std::vector<Cell> sample_distinct_cells(int width, int height, int count, Rng& rng) {
  const int n = width * height;
  if (count > n) {
    throw ConfigError("cannot place " + std::to_string(count) + " entities on a " +
                      std::to_string(width) + "x" + std::to_string(height) + " grid");
  }
  std::vector<int> cells(n);
  std::iota(cells.begin(), cells.end(), 0);
  std::vector<Cell> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.index(static_cast<std::size_t>(n - i)));
    std::swap(cells[i], cells[j]);
    out.push_back(Cell{cells[i] % width, cells[i] / width});
  }
  return out;
}

}  // namespace hop::detail
