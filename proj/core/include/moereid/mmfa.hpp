#pragma once

#include "moereid/encoders.hpp"
#include "moereid/nn.hpp"

#include <span>
#include <vector>

namespace moereid::mmfa {

// One cross-attention head per expert entry: FFN(LN(CA(Q, features))),
// queries are the three modality class tokens.
struct HeadParams {
  nn::Attention attn;
  nn::LayerNormParams ln;
  nn::Mlp ffn;
};

class AggregationBank {
 public:
  struct Config {
    int num_entries = 4;  // semantic experts + structure feature
    Index dim = 64;
    int heads = 4;
    int ffn_expansion = 2;
    bool pool_queries = false;  // mean over the 3 attended outputs instead of flatten
  };

  AggregationBank(const Config& cfg, ParamStore& store, RandomStream& init);

  static ad::NodeId build_query(ad::Tape& tape, const enc::VisualFeatures& feats);  // 3xD

  // 1x(3D) per entry (1xD when pooling).
  ad::NodeId aggregate(ad::Tape& tape, int entry_index, ad::NodeId query, ad::NodeId features,
                       std::vector<Tensor>* attn_probs = nullptr) const;

  ad::NodeId final_embedding(ad::Tape& tape, ad::NodeId query, std::span<const ad::NodeId> entries,
                             std::vector<std::vector<Tensor>>* attn_probs = nullptr) const;

  Index embedding_dim() const {
    return static_cast<Index>(cfg_.num_entries) * (cfg_.pool_queries ? cfg_.dim : 3 * cfg_.dim);
  }
  const Config& config() const { return cfg_; }
  const HeadParams& head(int i) const { return heads_[static_cast<std::size_t>(i)]; }

 private:
  Config cfg_;
  std::vector<HeadParams> heads_;
};

}  // namespace moereid::mmfa
