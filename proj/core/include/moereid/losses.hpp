#pragma once

#include "moereid/autodiff.hpp"

#include <vector>

namespace moereid {

// Label-smoothed cross entropy over batch logits (BxC), mean over the batch.
ad::NodeId id_loss(ad::Tape& tape, ad::NodeId logits, const std::vector<int>& labels,
                   double smoothing);

// Batch-hard triplet: per anchor, hardest positive (max same-ID distance,
// self excluded) against hardest negative (min other-ID distance), Euclidean;
// mean of max(0, d_ap - d_an + margin). Throws when the batch holds a single
// identity.
ad::NodeId triplet_loss(ad::Tape& tape, ad::NodeId embeddings, const std::vector<int>& labels,
                        double margin);

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace moereid
