#pragma once

#include "moereid/data.hpp"
#include "moereid/encoders.hpp"
#include "moereid/nn.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace moereid::tmse {

enum class SamplingStrategy { kDynamic, kAllToken, kTopK, kFixedSigma };

const char* sampling_strategy_name(SamplingStrategy s);
SamplingStrategy sampling_strategy_from_name(const std::string& s);

// Residual block shared by the semantic and structure experts:
// Dropout(MLP(LN(x))) + x.
struct ExpertParams {
  nn::LayerNormParams ln;
  nn::Mlp mlp;
};

ExpertParams make_expert(ParamStore& store, const std::string& name, Index dim, int expansion,
                         RandomStream& rs);
ad::NodeId expert_forward(ad::Tape& tape, const ExpertParams& p, ad::NodeId x, double dropout_rate,
                          bool training, RandomStream& dropout_rs);

// Per-(expert, modality) sampling route: tokens -> score map, class token ->
// scalar threshold. Both stacks are FC -> relu -> FC.
struct RouteParams {
  nn::Linear tok_fc1, tok_fc2;
  nn::Linear cls_fc1, cls_fc2;
};

RouteParams make_route(ParamStore& store, const std::string& name, Index dim, Index hidden,
                       RandomStream& rs);

struct RouteMaps {
  ad::NodeId alpha;  // (N x 1), reshapeable to the (H, W) grid
  ad::NodeId sigma;  // 1x1
};

RouteMaps route_maps(ad::Tape& tape, const RouteParams& p, ad::NodeId tok, ad::NodeId cls,
                     int grid_h, int grid_w);

// Smallest network consistent with a residual modulation of the score map:
// gamma = tanh(w_a*alpha + w_b*beta + b) + alpha, elementwise.
struct ModulationParams {
  Param* w_alpha = nullptr;  // 1x1
  Param* w_beta = nullptr;   // 1x1
  Param* bias = nullptr;     // 1x1
};

ModulationParams make_modulation(ParamStore& store, const std::string& name);
ad::NodeId modulate(ad::Tape& tape, const ModulationParams& p, ad::NodeId alpha, ad::NodeId beta);

// Deterministic caption-subset draw: subset size k ~ U{1..min(n,k_max)}, then
// k sentences without replacement, joined in original order. Keyed by
// (seed, expert, step, modality, caption text) so parallel callers never race.
std::string sample_sentences(const data::CaptionRecord& caption, int k_max, std::uint64_t seed,
                             int expert_index, long step, int modality_index);

// Grid-shaped snapshots of one (expert, modality) routing decision.
struct RouteState {
  Tensor alpha;
  Tensor beta;   // empty when not modulated
  Tensor gamma;  // empty when not modulated
  Tensor mask;
  double sigma = 0.0;
  bool modulated = false;
  double mask_density() const;
};

struct SemanticBankConfig {
  int num_experts = 3;
  Index dim = 64;
  int expansion = 2;
  double dropout = 0.1;
  int k_max = 3;
  SamplingStrategy strategy = SamplingStrategy::kDynamic;
  double fixed_sigma = 0.0;
  double top_k_fraction = 0.5;
  ad::GateMode gate_mode = ad::GateMode::kHard;
  bool routes_shared_across_modalities = false;
  std::uint64_t sentence_seed = 0;
};

class SemanticBank {
 public:
  SemanticBank(const SemanticBankConfig& cfg, ParamStore& store, RandomStream& init);

  // Per-expert masked features for one sample, each (3N x D). `captions` and
  // `text_encoder` are required when `modulated` is set.
  std::vector<ad::NodeId> forward(ad::Tape& tape, const enc::VisualFeatures& feats,
                                  const std::array<data::CaptionRecord, 3>* captions,
                                  const enc::TextEncoder* text_encoder, bool training,
                                  bool modulated, long step, RandomStream& dropout_rs,
                                  std::vector<std::array<RouteState, 3>>* diagnostics = nullptr) const;

  int num_experts() const { return cfg_.num_experts; }
  const SemanticBankConfig& config() const { return cfg_; }
  const ExpertParams& expert(int i) const { return experts_[static_cast<std::size_t>(i)]; }
  const RouteParams& route(int expert, int modality) const {
    return routes_[static_cast<std::size_t>(expert * 3 + modality)];
  }
  const ModulationParams& modulation(int expert, int modality) const {
    return modnets_[static_cast<std::size_t>(expert * 3 + modality)];
  }

 private:
  SemanticBankConfig cfg_;
  std::vector<ExpertParams> experts_;
  std::vector<RouteParams> routes_;       // [expert*3 + modality]
  std::vector<ModulationParams> modnets_;  // [expert*3 + modality]
};

}  // namespace moereid::tmse
