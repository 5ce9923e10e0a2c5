#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "hop/rng.hpp"

namespace hop::test {

// Largest relative error between an analytic gradient and central differences,
// over `probes` randomly chosen coordinates. The relative error uses
// max(|fd|, |analytic|, floor) as denominator so that coordinates whose true
// gradient is zero are judged on absolute error.
inline double max_relative_gradient_error(std::span<double> params,
                                          const std::function<double()>& loss,
                                          std::span<const double> analytic, int probes, Rng& rng,
                                          double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const std::size_t i = rng.index(params.size());
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace hop::test
