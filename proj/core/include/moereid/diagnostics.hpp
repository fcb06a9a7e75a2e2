#pragma once

#include "moereid/model.hpp"

#include <filesystem>

namespace moereid::diag {

struct DiagConfig {
  int max_samples = 1;
  std::filesystem::path out_dir;
  int upscale = 8;  // nearest-neighbour factor for mask/score images
};

struct DiagSummary {
  int samples = 0;
  int mask_images = 0;
  std::filesystem::path omega_csv;
  std::filesystem::path attention_csv;
};

// Per-sample exports: semantic-expert masks and score maps as images,
// structure routing weights and expert activation norms as CSV, aggregation
// attention maps as CSV.
DiagSummary export_diagnostics(Model& model, const data::DatasetIndex& index, const DiagConfig& cfg);

}  // namespace moereid::diag
