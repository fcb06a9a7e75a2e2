#pragma once

#include "moereid/tmse.hpp"

namespace moereid::csse {

struct StructureBankConfig {
  int num_experts = 3;
  Index dim = 64;
  int expansion = 2;
  double dropout = 0.1;
  // As printed, routing pools the whole concatenated sequence into one weight
  // vector per sample; the per-modality variant is kept for the route study.
  bool route_modality_shared = true;
};

class StructureBank {
 public:
  StructureBank(const StructureBankConfig& cfg, ParamStore& store, RandomStream& init);

  struct Out {
    ad::NodeId mixed;                    // (3N x D) convex expert mixture
    std::vector<ad::NodeId> per_expert;  // raw expert outputs (diagnostics)
    ad::NodeId omega;                    // 1xN_C shared, 3xN_C modality-specific
  };

  Out forward(ad::Tape& tape, ad::NodeId concat_tok, bool training, RandomStream& dropout_rs,
              Index tokens_per_modality) const;

  // Token-wise logits, mean-pooled, softmaxed -> 1xN_C.
  ad::NodeId route_omega(ad::Tape& tape, ad::NodeId tok) const;

  int num_experts() const { return cfg_.num_experts; }
  const StructureBankConfig& config() const { return cfg_; }
  const tmse::ExpertParams& expert(int i) const { return experts_[static_cast<std::size_t>(i)]; }
  const nn::Linear& route_fc() const { return route_fc_; }

 private:
  StructureBankConfig cfg_;
  std::vector<tmse::ExpertParams> experts_;
  nn::Linear route_fc_;
};

}  // namespace moereid::csse
