#include "hop/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hop/errors.hpp"

namespace hop {

void masked_softmax(std::span<const double> logits, ActionMask legal, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  const std::size_t n = out.size();
  for (std::size_t a = 0; a < n; ++a) {
    if (mask_has(legal, static_cast<int>(a))) mx = std::max(mx, logits[a]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw ArgumentError("masked_softmax: no legal action");
  }
  double z = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    out[a] = mask_has(legal, static_cast<int>(a)) ? std::exp(logits[a] - mx) : 0.0;
    z += out[a];
  }
  for (std::size_t a = 0; a < n; ++a) out[a] /= z;
}

double UniformPriorValue::evaluate(const GridState& /*state*/, AgentId /*focal*/, ActionMask legal,
                                   std::span<double> prior_out) const {
  int k = 0;
  for (std::size_t a = 0; a < prior_out.size(); ++a) k += mask_has(legal, static_cast<int>(a));
  for (std::size_t a = 0; a < prior_out.size(); ++a) {
    prior_out[a] = mask_has(legal, static_cast<int>(a)) && k > 0 ? 1.0 / k : 0.0;
  }
  return 0.0;
}

}  // namespace hop
