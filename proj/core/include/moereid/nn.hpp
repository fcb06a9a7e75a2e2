#pragma once

#include "moereid/autodiff.hpp"

#include <string>
#include <vector>

namespace moereid::nn {

Tensor init_normal(Index rows, Index cols, RandomStream& rs, double stddev);
Tensor init_xavier(Index rows, Index cols, RandomStream& rs);

struct Linear {
  Param* w = nullptr;  // (in x out)
  Param* b = nullptr;  // (1 x out)
};

Linear make_linear(ParamStore& store, const std::string& name, Index in, Index out,
                   RandomStream& rs, bool trainable = true);
Linear make_linear_zero(ParamStore& store, const std::string& name, Index in, Index out,
                        bool trainable = true);
ad::NodeId linear(ad::Tape& tape, const Linear& p, ad::NodeId x);

struct LayerNormParams {
  Param* gain = nullptr;
  Param* bias = nullptr;
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, Index dim,
                                bool trainable = true);
ad::NodeId layer_norm(ad::Tape& tape, const LayerNormParams& p, ad::NodeId x, double eps = 1e-5);

struct Mlp {
  Linear fc1;
  Linear fc2;
};

Mlp make_mlp(ParamStore& store, const std::string& name, Index in, Index hidden, Index out,
             RandomStream& rs, bool trainable = true);
ad::NodeId mlp(ad::Tape& tape, const Mlp& p, ad::NodeId x);  // fc2(gelu(fc1(x)))

struct Attention {
  Linear q, k, v, o;
  int heads = 1;
};

Attention make_attention(ParamStore& store, const std::string& name, Index dim, int heads,
                         RandomStream& rs, bool trainable = true);
// attn_probs, when given, receives one (Sq x Skv) row-stochastic map per head.
ad::NodeId multihead_attention(ad::Tape& tape, const Attention& p, ad::NodeId query_in,
                               ad::NodeId kv_in, std::vector<Tensor>* attn_probs = nullptr);

}  // namespace moereid::nn
