#include "moereid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace moereid::nn {

Tensor init_normal(Index rows, Index cols, RandomStream& rs, double stddev) {
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.at_flat(i) = rs.normal(0.0, stddev);
  return t;
}

Tensor init_xavier(Index rows, Index cols, RandomStream& rs) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.at_flat(i) = rs.uniform(-bound, bound);
  return t;
}

Linear make_linear(ParamStore& store, const std::string& name, Index in, Index out,
                   RandomStream& rs, bool trainable) {
  Linear l;
  l.w = &store.add(name + ".w", init_xavier(in, out, rs), trainable);
  l.b = &store.add(name + ".b", Tensor(1, out), trainable);
  return l;
}

Linear make_linear_zero(ParamStore& store, const std::string& name, Index in, Index out,
                        bool trainable) {
  Linear l;
  l.w = &store.add(name + ".w", Tensor(in, out), trainable);
  l.b = &store.add(name + ".b", Tensor(1, out), trainable);
  return l;
}

ad::NodeId linear(ad::Tape& tape, const Linear& p, ad::NodeId x) {
  return tape.add_row_broadcast(tape.matmul(x, tape.param(*p.w)), tape.param(*p.b));
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, Index dim,
                                bool trainable) {
  LayerNormParams p;
  p.gain = &store.add(name + ".gain", Tensor::ones(1, dim), trainable);
  p.bias = &store.add(name + ".bias", Tensor(1, dim), trainable);
  return p;
}

ad::NodeId layer_norm(ad::Tape& tape, const LayerNormParams& p, ad::NodeId x, double eps) {
  return tape.layer_norm(x, tape.param(*p.gain), tape.param(*p.bias), eps);
}

Mlp make_mlp(ParamStore& store, const std::string& name, Index in, Index hidden, Index out,
             RandomStream& rs, bool trainable) {
  Mlp m;
  m.fc1 = make_linear(store, name + ".fc1", in, hidden, rs, trainable);
  m.fc2 = make_linear(store, name + ".fc2", hidden, out, rs, trainable);
  return m;
}

ad::NodeId mlp(ad::Tape& tape, const Mlp& p, ad::NodeId x) {
  return linear(tape, p.fc2, tape.gelu(linear(tape, p.fc1, x)));
}

Attention make_attention(ParamStore& store, const std::string& name, Index dim, int heads,
                         RandomStream& rs, bool trainable) {
  if (dim % heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
  Attention a;
  a.q = make_linear(store, name + ".q", dim, dim, rs, trainable);
  a.k = make_linear(store, name + ".k", dim, dim, rs, trainable);
  a.v = make_linear(store, name + ".v", dim, dim, rs, trainable);
  a.o = make_linear(store, name + ".o", dim, dim, rs, trainable);
  a.heads = heads;
  return a;
}

ad::NodeId multihead_attention(ad::Tape& tape, const Attention& p, ad::NodeId query_in,
                               ad::NodeId kv_in, std::vector<Tensor>* attn_probs) {
  const Index dim = tape.value(query_in).cols();
  if (dim % p.heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
  const Index head_dim = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const ad::NodeId q = linear(tape, p.q, query_in);
  const ad::NodeId k = linear(tape, p.k, kv_in);
  const ad::NodeId v = linear(tape, p.v, kv_in);

  std::vector<ad::NodeId> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    const Index c0 = static_cast<Index>(h) * head_dim;
    const ad::NodeId qh = tape.slice_cols(q, c0, head_dim);
    const ad::NodeId kh = tape.slice_cols(k, c0, head_dim);
    const ad::NodeId vh = tape.slice_cols(v, c0, head_dim);
    const ad::NodeId logits = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
    const ad::NodeId probs = tape.softmax_rows(logits);
    if (attn_probs) attn_probs->push_back(tape.value(probs));
    head_outputs.push_back(tape.matmul(probs, vh));
  }
  const ad::NodeId merged = tape.concat_cols(head_outputs);
  return linear(tape, p.o, merged);
}

}  // namespace moereid::nn
