#include "moereid/data.hpp"
#include "moereid/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace moereid::data {

PkBatchSampler::PkBatchSampler(const DatasetIndex& index, int num_ids_per_batch, int samples_per_id,
                               std::uint64_t seed)
    : index_(&index), p_(num_ids_per_batch), k_(samples_per_id), seed_(seed) {
  if (p_ < 2) throw std::invalid_argument("PK sampler needs at least 2 identities per batch");
  if (k_ < 1) throw std::invalid_argument("PK sampler needs at least 1 sample per identity");
  for (std::size_t i = 0; i < index.samples.size(); ++i) {
    const auto& s = index.samples[i];
    if (s.split != Split::kTrain) continue;
    by_identity_[s.identity].push_back(i);
  }
  for (const auto& [id, _] : by_identity_) train_identities_.push_back(id);
  if (train_identities_.size() < 2)
    throw std::invalid_argument("PK sampler: fewer than 2 train identities (triplet mining undefined)");
}

std::vector<PkBatch> PkBatchSampler::epoch(std::int64_t epoch_index) const {
  RandomStream rs(mix_keys(seed_, mix_keys(0xEB0Cu, static_cast<std::uint64_t>(epoch_index))));
  std::vector<int> ids = train_identities_;
  rs.shuffle(ids);

  std::vector<PkBatch> batches;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(p_)) {
    std::vector<int> group(ids.begin() + static_cast<std::ptrdiff_t>(start),
                           ids.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(start + static_cast<std::size_t>(p_), ids.size())));
    // Top up a short trailing group with distinct identities from earlier.
    std::size_t wrap = 0;
    while (group.size() < static_cast<std::size_t>(p_)) {
      const int candidate = ids[wrap++ % ids.size()];
      if (std::find(group.begin(), group.end(), candidate) == group.end()) group.push_back(candidate);
      if (wrap > 4 * ids.size()) break;  // fewer identities than P: keep the short group
    }
    PkBatch batch;
    for (int id : group) {
      const auto& pool = by_identity_.at(id);
      std::vector<std::size_t> chosen;
      if (pool.size() >= static_cast<std::size_t>(k_)) {
        std::vector<std::size_t> shuffled = pool;
        rs.shuffle(shuffled);
        chosen.assign(shuffled.begin(), shuffled.begin() + k_);
      } else {
        // Identity is short on samples: resample with replacement.
        chosen = pool;
        while (chosen.size() < static_cast<std::size_t>(k_))
          chosen.push_back(pool[static_cast<std::size_t>(
              rs.uniform_int(static_cast<std::int64_t>(pool.size())))]);
      }
      batch.sample_indices.insert(batch.sample_indices.end(), chosen.begin(), chosen.end());
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace moereid::data
