#pragma once

#include "moereid/data.hpp"
#include "moereid/eval.hpp"
#include "moereid/model.hpp"
#include "moereid/optimizer.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace moereid {

struct TrainConfig {
  long steps = 300;
  int batch_ids = 4;        // P
  int samples_per_id = 4;   // K
  bool use_augment = false;
  data::AugmentationConfig augment;
  OptimConfig optim;
  std::uint64_t seed = 0;

  long eval_every = 0;  // 0: evaluate only after the last step
  eval::Protocol eval_protocol = eval::Protocol::kNone;
  data::Split eval_query_split = data::Split::kTrain;
  data::Split eval_gallery_split = data::Split::kTrain;

  std::filesystem::path out_dir;  // empty: keep everything in memory
  long log_every = 1;
  // When positive (and out_dir is set), every Nth step also dumps the full
  // per-sample routing state (scores, thresholds, relevance, masks) to
  // routes_step<N>.json for the visualization tooling.
  long dump_routes_every = 0;
};

struct StepRecord {
  long step = 0;
  double id_loss = 0.0;
  double triplet_loss = 0.0;
  double total = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  // Mean mask density per (semantic expert, modality), flattened expert-major.
  std::vector<double> mask_density;
  // Mean structure routing weight per expert.
  std::vector<double> omega_mean;
};

struct TrainResult {
  std::vector<StepRecord> history;
  std::optional<eval::Metrics> final_metrics;
  double best_map = -1.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

// Prepares one batch (augmentation, resize) from dataset rows.
Batch make_batch(const data::DatasetIndex& index, const std::vector<std::size_t>& sample_indices,
                 const ModelConfig& cfg, const TrainConfig& tc, long step);

// Embeds a dataset split with the current weights.
eval::RetrievalSet make_retrieval_set(Model& model, const data::DatasetIndex& index,
                                      data::Split query_split, data::Split gallery_split);

TrainResult train_model(Model& model, const data::DatasetIndex& index, const TrainConfig& tc);

}  // namespace moereid
