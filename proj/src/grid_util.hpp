#pragma once

#include <span>
#include <vector>

#include "hop/game.hpp"

namespace hop::detail {

// Cell reached by `act` from `from`; moves off the grid leave the agent in place.
Cell apply_move(Cell from, int act, int width, int height);

// Draws `count` distinct cells uniformly without replacement (partial Fisher-Yates).
std::vector<Cell> sample_distinct_cells(int width, int height, int count, Rng& rng);

// Planes centred on the subject: a (2W-1) x (2H-1) window, so every cell of the
// grid has a slot whatever the subject's position.
class EgocentricPlanes {
 public:
  EgocentricPlanes(int width, int height) : width_(width), height_(height) {}
  int plane_size() const { return (2 * width_ - 1) * (2 * height_ - 1); }
  int index(Cell subject, Cell c) const {
    const int dx = c.x - subject.x + width_ - 1;
    const int dy = c.y - subject.y + height_ - 1;
    return dy * (2 * width_ - 1) + dx;
  }
  void add(std::span<double> plane, Cell subject, Cell c, double v = 1.0) const {
    plane[index(subject, c)] += v;
  }

 private:
  int width_;
  int height_;
};

}  // namespace hop::detail
