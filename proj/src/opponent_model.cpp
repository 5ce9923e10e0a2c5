#include "hop/opponent_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be > 0");
}

void ReplayBuffer::push(ReplayEntry entry) {
  if (entries_.size() >= capacity_) entries_.pop_front();
  entries_.push_back(std::move(entry));
}

void check_finite_loss(double loss, std::size_t batch_size, std::span<const double> params,
                       const char* what) {
  if (std::isfinite(loss)) return;
  double norm = 0.0;
  std::size_t non_finite = 0;
  for (double p : params) {
    if (std::isfinite(p)) {
      norm += p * p;
    } else {
      ++non_finite;
    }
  }
  std::ostringstream os;
  os << what << ": non-finite loss " << loss << " (batch " << batch_size << ", "
     << params.size() << " params, |theta|=" << std::sqrt(norm) << ", non-finite params "
     << non_finite << ")";
  throw TrainingError(os.str());
}

GoalConditionedModel::GoalConditionedModel(std::shared_ptr<const Environment> env, int hidden,
                                           std::uint64_t seed)
    : env_(std::move(env)),
      net_(Architecture{env_->feature_size(), hidden, env_->n_actions()}, seed) {}

GoalConditionedModel::GoalConditionedModel(std::shared_ptr<const Environment> env, Mlp net)
    : env_(std::move(env)), net_(std::move(net)) {
  const Architecture want{env_->feature_size(), net_.architecture().hidden, env_->n_actions()};
  if (!(net_.architecture() == want)) {
    throw LoadError("goal-conditioned model: network does not match environment features");
  }
}

void GoalConditionedModel::distribution(const GridState& state, AgentId subject, int goal,
                                        ActionMask legal, std::span<double> out) const {
  thread_local std::vector<double> x;
  thread_local Mlp::Workspace ws;
  x.resize(env_->feature_size());
  env_->encode(state, subject, goal, x);
  net_.forward(x, ws);
  masked_softmax(ws.output, legal, out.first(env_->n_actions()));
}

std::vector<double> GoalConditionedModel::predict(const GridState& state, AgentId subject,
                                                  int goal) const {
  if (goal < 0 || goal >= env_->spec().n_goals(subject)) {
    throw ArgumentError("predict: goal outside the subject's goal set");
  }
  std::vector<double> p(env_->n_actions());
  distribution(state, subject, goal, env_->legal_actions(state, subject), p);
  return p;
}

double GoalConditionedModel::loss(std::span<const ReplayEntry* const> batch,
                                  std::span<double> grad) const {
  if (batch.empty()) throw ArgumentError("loss: empty batch");
  const int A = env_->n_actions();
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> x(env_->feature_size());
  std::vector<double> p(A);
  std::vector<double> d_out(A);
  Mlp::Workspace ws;
  double total = 0.0;
  for (const ReplayEntry* e : batch) {
    const ActionMask legal = env_->legal_actions(e->state, e->subject);
    env_->encode(e->state, e->subject, e->goal, x);
    net_.forward(x, ws);
    masked_softmax(ws.output, legal, p);
    total += -std::log(p[e->action]);
    if (!grad.empty()) {
      for (int a = 0; a < A; ++a) {
        d_out[a] = mask_has(legal, a) ? inv * (p[a] - (a == e->action ? 1.0 : 0.0)) : 0.0;
      }
      net_.backward(x, ws, d_out, grad);
    }
  }
  return total * inv;
}

double GoalConditionedModel::train_step(std::span<const ReplayEntry* const> batch,
                                        double learning_rate) {
  std::vector<double> grad(net_.parameter_count(), 0.0);
  const double l = loss(batch, grad);
  check_finite_loss(l, batch.size(), net_.parameters(), "opponent model");
  auto params = net_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grad[i];
  return l;
}

double GoalConditionedModel::train_epochs(const ReplayBuffer& buffer, int epochs, int batch_size,
                                          double learning_rate, Rng& rng) {
  if (buffer.size() == 0 || epochs < 1) return 0.0;
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const ReplayEntry*> batch;
  double sum = 0.0;
  int steps = 0;
  for (int ep = 0; ep < epochs; ++ep) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
        batch.push_back(&buffer[order[k]]);
      }
      sum += train_step(batch, learning_rate);
      ++steps;
    }
  }
  return sum / steps;
}

void GoalConditionedModel::save(std::ostream& out) const {
  out << "hop-goal-model v1\n";
  net_.save(out);
}

GoalConditionedModel GoalConditionedModel::load(std::istream& in,
                                                std::shared_ptr<const Environment> env) {
  std::string line;
  in >> std::ws;
  if (!std::getline(in, line) || line != "hop-goal-model v1") {
    throw LoadError("checkpoint: expected 'hop-goal-model v1'");
  }
  return GoalConditionedModel(std::move(env), Mlp::load(in));
}

}  // namespace hop
