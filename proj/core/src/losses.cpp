#include "moereid/losses.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace moereid {

ad::NodeId id_loss(ad::Tape& tape, ad::NodeId logits, const std::vector<int>& labels,
                   double smoothing) {
  return tape.cross_entropy_smoothed(logits, labels, smoothing);
}

ad::NodeId triplet_loss(ad::Tape& tape, ad::NodeId embeddings, const std::vector<int>& labels,
                        double margin) {
  const Tensor& emb = tape.value(embeddings);
  const Index b = emb.rows();
  if (static_cast<Index>(labels.size()) != b)
    throw std::invalid_argument("triplet_loss: label count mismatch");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
    throw std::invalid_argument("triplet_loss: batch holds a single identity");

  const ad::NodeId dist = tape.pairwise_distances(embeddings);
  const Tensor& d = tape.value(dist);

  // Mining happens on forward values; gradients flow through the chosen pairs.
  std::vector<std::pair<Index, Index>> hardest_pos;
  std::vector<std::pair<Index, Index>> hardest_neg;
  for (Index a = 0; a < b; ++a) {
    Index pos = -1;
    Index neg = -1;
    for (Index j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || d(a, j) > d(a, pos)) pos = j;
      } else {
        if (neg < 0 || d(a, j) < d(a, neg)) neg = j;
      }
    }
    // An anchor whose identity appears once degenerates to the self pair
    // (distance exactly zero); only the negative side then carries gradient.
    hardest_pos.emplace_back(a, pos < 0 ? a : pos);
    hardest_neg.emplace_back(a, neg);
  }

  const ad::NodeId d_ap = tape.gather_pairs(dist, hardest_pos);
  const ad::NodeId d_an = tape.gather_pairs(dist, hardest_neg);
  const ad::NodeId hinge = tape.relu(tape.add_scalar(tape.sub(d_ap, d_an), margin));
  return tape.mean_all(hinge);
}

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) return 0.0;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace moereid
