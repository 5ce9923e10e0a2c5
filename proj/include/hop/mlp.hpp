#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace hop {

class Rng;

struct Architecture {
  int inputs = 0;
  int hidden = 0;
  int outputs = 0;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Two-layer perceptron: inputs -> tanh(hidden) -> linear outputs.
//
// Parameters live in one flat vector laid out as
//   W1[inputs][hidden] | b1[hidden] | W2[outputs][hidden] | b2[outputs]
// W1 is stored input-major so zero inputs (most of a one-hot grid encoding)
// can be skipped in both passes.
class Mlp {
 public:
  struct Workspace {
    std::vector<double> hidden;
    std::vector<double> output;
  };

  Mlp() = default;
  // Hidden layer ~ U(-s, s) with s = sqrt(6 / (inputs + hidden)); output layer zero.
  Mlp(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  void forward(std::span<const double> x, Workspace& ws) const;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(outputs).
  void backward(std::span<const double> x, const Workspace& ws, std::span<const double> d_output,
                std::span<double> grad) const;

  // Fills every parameter with N(0, scale^2). Used to probe gradients away from init.
  void randomize(Rng& rng, double scale);

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return static_cast<std::size_t>(arch_.inputs) * arch_.hidden; }
  std::size_t w2() const { return b1() + arch_.hidden; }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(arch_.outputs) * arch_.hidden; }

  Architecture arch_;
  std::vector<double> params_;
};

}  // namespace hop
