#pragma once

#include "moereid/trainer.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace moereid::study {

enum class Axis { kModules, kRouteType, kSampling, kCaptionQuality, kExpertCount };

const char* axis_name(Axis a);
Axis axis_from_name(const std::string& s);

// Retains max(1, ceil(quality% * n)) of each caption's sentences, uniformly at
// random under the seed; 100% is the identity.
data::DatasetIndex degrade_captions(const data::DatasetIndex& index, double quality_percent,
                                    std::uint64_t seed);

struct StudySpec {
  Axis axis = Axis::kModules;
  ModelConfig base;
  TrainConfig budget;                  // identical for every configuration
  data::SyntheticSpec dataset;         // desk-scale data source
  std::vector<std::uint64_t> seeds = {0};
  std::vector<int> expert_counts = {1, 2, 3, 4, 5, 6};
  std::vector<double> caption_qualities = {35.0, 70.0, 100.0};
  // When set, each run writes its training log under <run_log_dir>/<row>/<seed>.
  std::filesystem::path run_log_dir;
};

struct RunMetrics {
  double mAP = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
};

struct StudyRow {
  std::string label;
  nlohmann::json config_delta;
  std::vector<std::pair<std::uint64_t, RunMetrics>> per_seed;
  RunMetrics mean;
  bool failed = false;
  std::string error;
};

struct StudyReport {
  Axis axis = Axis::kModules;
  std::vector<StudyRow> rows;
  nlohmann::json budget_echo;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

StudyReport run_study(const StudySpec& spec);

}  // namespace moereid::study
