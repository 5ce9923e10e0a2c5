#include "hop/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

Mlp::Mlp(Architecture arch, std::uint64_t seed) : arch_(arch) {
  if (arch.inputs < 1 || arch.hidden < 1 || arch.outputs < 1) {
    throw ConfigError("mlp: all layer sizes must be positive");
  }
  params_.assign(b2() + arch.outputs, 0.0);
  Rng rng(seed);
  const double s = std::sqrt(6.0 / (arch.inputs + arch.hidden));
  for (std::size_t i = w1(); i < b1(); ++i) params_[i] = (2.0 * rng.uniform() - 1.0) * s;
}

void Mlp::forward(std::span<const double> x, Workspace& ws) const {
  const int H = arch_.hidden;
  const int O = arch_.outputs;
  ws.hidden.assign(params_.begin() + b1(), params_.begin() + b1() + H);
  for (int i = 0; i < arch_.inputs; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = params_.data() + w1() + static_cast<std::size_t>(i) * H;
    for (int h = 0; h < H; ++h) ws.hidden[h] += xi * row[h];
  }
  for (int h = 0; h < H; ++h) ws.hidden[h] = std::tanh(ws.hidden[h]);
  ws.output.resize(O);
  for (int o = 0; o < O; ++o) {
    const double* row = params_.data() + w2() + static_cast<std::size_t>(o) * H;
    double acc = params_[b2() + o];
    for (int h = 0; h < H; ++h) acc += row[h] * ws.hidden[h];
    ws.output[o] = acc;
  }
}

void Mlp::backward(std::span<const double> x, const Workspace& ws, std::span<const double> d_output,
                   std::span<double> grad) const {
  const int H = arch_.hidden;
  const int O = arch_.outputs;
  std::vector<double> d_hidden(H, 0.0);
  for (int o = 0; o < O; ++o) {
    const double g = d_output[o];
    if (g == 0.0) continue;
    const double* row = params_.data() + w2() + static_cast<std::size_t>(o) * H;
    double* grow = grad.data() + w2() + static_cast<std::size_t>(o) * H;
    for (int h = 0; h < H; ++h) {
      grow[h] += g * ws.hidden[h];
      d_hidden[h] += g * row[h];
    }
    grad[b2() + o] += g;
  }
  for (int h = 0; h < H; ++h) d_hidden[h] *= 1.0 - ws.hidden[h] * ws.hidden[h];
  for (int h = 0; h < H; ++h) grad[b1() + h] += d_hidden[h];
  for (int i = 0; i < arch_.inputs; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* grow = grad.data() + w1() + static_cast<std::size_t>(i) * H;
    for (int h = 0; h < H; ++h) grow[h] += xi * d_hidden[h];
  }
}

void Mlp::randomize(Rng& rng, double scale) {
  for (double& p : params_) p = scale * rng.normal();
}

void Mlp::save(std::ostream& out) const {
  out << "mlp " << arch_.inputs << ' ' << arch_.hidden << ' ' << arch_.outputs << ' '
      << params_.size() << '\n';
  char buf[64];
  for (double p : params_) {
    std::snprintf(buf, sizeof(buf), "%a", p);
    out << buf << '\n';
  }
}

Mlp Mlp::load(std::istream& in) {
  std::string tag;
  Mlp m;
  std::size_t count = 0;
  if (!(in >> tag >> m.arch_.inputs >> m.arch_.hidden >> m.arch_.outputs >> count) || tag != "mlp") {
    throw LoadError("checkpoint: malformed network header");
  }
  if (m.arch_.inputs < 1 || m.arch_.hidden < 1 || m.arch_.outputs < 1) {
    throw LoadError("checkpoint: bad network architecture");
  }
  if (count != m.b2() + m.arch_.outputs) {
    throw LoadError("checkpoint: parameter count does not match architecture");
  }
  m.params_.resize(count);
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> tok)) throw LoadError("checkpoint: truncated parameter array");
    char* end = nullptr;
    m.params_[i] = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw LoadError("checkpoint: bad parameter '" + tok + "'");
  }
  return m;
}

}  // namespace hop
