#pragma once

#include "moereid/autodiff.hpp"

#include <unordered_map>
#include <utility>

namespace moereid {

struct OptimConfig {
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool cosine_decay = false;
  long total_steps = 0;  // required when cosine_decay is set

  // Desk-scale default; the full-scale profile assumes a pretrained backbone.
  static OptimConfig desk_profile() { return {}; }
  static OptimConfig full_scale_profile() {
    OptimConfig c;
    c.lr = 3.5e-6;
    return c;
  }
};

class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore& store, const OptimConfig& cfg);

  // Applies one update from the tape's gradients; returns the lr used.
  // Trainable parameters only; frozen ones are never touched.
  double step(ad::Tape& tape);

  long steps_taken() const { return t_; }
  double lr_at(long t) const;

 private:
  ParamStore* store_;
  OptimConfig cfg_;
  long t_ = 0;
  std::unordered_map<const Param*, std::pair<Tensor, Tensor>> state_;  // (m, v)
};

}  // namespace moereid
