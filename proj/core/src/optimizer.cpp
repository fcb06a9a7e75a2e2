#include "moereid/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace moereid {

AdamOptimizer::AdamOptimizer(ParamStore& store, const OptimConfig& cfg)
    : store_(&store), cfg_(cfg) {
  if (cfg_.cosine_decay && cfg_.total_steps <= 0)
    throw std::invalid_argument("cosine decay needs total_steps");
}

double AdamOptimizer::lr_at(long t) const {
  if (!cfg_.cosine_decay) return cfg_.lr;
  const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(cfg_.total_steps));
  return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double AdamOptimizer::step(ad::Tape& tape) {
  ++t_;
  const double lr = lr_at(t_ - 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  // Store order keeps updates deterministic.
  for (Param* p : store_->all()) {
    if (!p->trainable || !tape.param_used(p)) continue;
    const Tensor grad_raw = tape.grad(tape.param_node(p));
    auto& [m, v] = state_[p];
    if (m.empty()) {
      m = Tensor(p->value.rows(), p->value.cols());
      v = Tensor(p->value.rows(), p->value.cols());
    }
    for (Index i = 0; i < p->value.size(); ++i) {
      const double g = grad_raw.at_flat(i) + cfg_.weight_decay * p->value.at_flat(i);
      m.at_flat(i) = cfg_.beta1 * m.at_flat(i) + (1.0 - cfg_.beta1) * g;
      v.at_flat(i) = cfg_.beta2 * v.at_flat(i) + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m.at_flat(i) / bc1;
      const double vhat = v.at_flat(i) / bc2;
      p->value.at_flat(i) -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!p->value.all_finite())
      throw std::runtime_error("non-finite parameter after update: " + p->name);
  }
  return lr;
}

}  // namespace moereid
