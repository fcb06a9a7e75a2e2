#pragma once

#include "moereid/rng.hpp"
#include "moereid/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace moereid {

// Named parameter tensor. Addresses are stable (owned by ParamStore).
struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class ParamStore {
 public:
  Param& add(std::string name, Tensor init, bool trainable = true);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::size_t size() const { return items_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

namespace ad {

using NodeId = std::int32_t;

// How the token-selection gate behaves in the forward pass. Hard produces an
// exact 0/1 mask with straight-through gradients; Soft replaces the threshold
// with the differentiable surrogate (map - sigma) the straight-through
// backward corresponds to, which is what the finite-difference harness runs.
enum class GateMode { kHard, kSoft };

// Reverse-mode tape over Tensor values. Nodes are created in topological
// order; backward() walks them in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(Tensor v);
  NodeId leaf(Tensor v);  // gradient-tracked non-parameter input (probes)
  NodeId param(Param& p);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId add_scalar(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId relu(NodeId a);
  NodeId gelu(NodeId a);
  NodeId tanh_fn(NodeId a);
  NodeId sqrt_guarded(NodeId a);

  NodeId add_row_broadcast(NodeId m, NodeId row);   // (RxC) + (1xC)
  NodeId scale_rows(NodeId m, NodeId col);          // out[i,j] = m[i,j] * col[i,0]
  NodeId scale_by_scalar(NodeId m, NodeId s);       // s is 1x1
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId softmax_rows(NodeId x);
  NodeId mean_rows(NodeId x);   // (RxC) -> (1xC)
  NodeId sum_all(NodeId x);     // -> 1x1
  NodeId mean_all(NodeId x);    // -> 1x1
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId slice_rows(NodeId a, Index r0, Index count);
  NodeId slice_cols(NodeId a, Index c0, Index count);
  NodeId reshape(NodeId a, Index rows, Index cols);
  NodeId dropout(NodeId a, double rate, RandomStream& rs, bool training);

  // Token gate against a learned scalar threshold (1x1 node).
  // Hard forward: 1[map > sigma]; Soft forward: map - sigma.
  // Backward for both: d map += g, d sigma += -sum(g).
  NodeId threshold_gate(NodeId map, NodeId sigma, GateMode mode);
  // Same against a fixed threshold; backward: d map += g.
  NodeId threshold_gate_const(NodeId map, double sigma, GateMode mode);
  // 1 at the k largest entries (ties by lower flat index); straight-through.
  NodeId topk_gate(NodeId map, Index k);

  // Per-row cosine similarity against a single row vector -> (Nx1).
  // Denominator is max(|t|*|x_i|, eps).
  NodeId cosine_rows(NodeId text_row, NodeId tokens, double eps = 1e-8);

  // (Bxdim) -> (BxB) pairwise Euclidean distances, zero diagonal.
  NodeId pairwise_distances(NodeId emb);
  // Gather mat[r,c] for each listed pair -> (Kx1).
  NodeId gather_pairs(NodeId mat, std::vector<std::pair<Index, Index>> pairs);

  // Mean over rows of label-smoothed cross entropy; logits (BxC) -> 1x1.
  NodeId cross_entropy_smoothed(NodeId logits, std::vector<int> labels, double smoothing);

  void backward(NodeId root);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Gradient of the last backward() root w.r.t. node id (zeros if untouched).
  Tensor grad(NodeId id) const;
  bool param_used(const Param* p) const { return param_nodes_.count(p) > 0; }
  NodeId param_node(const Param* p) const { return param_nodes_.at(p); }
  const std::unordered_map<const Param*, NodeId>& param_nodes() const { return param_nodes_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    bool requires_grad = false;
    std::function<void()> back;  // empty for constants/leaves
  };

  NodeId push(Tensor value, bool requires_grad, std::function<void()> back = {});
  Tensor& grad_buf(NodeId id);
  bool rg(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, NodeId> param_nodes_;
};

}  // namespace ad
}  // namespace moereid
