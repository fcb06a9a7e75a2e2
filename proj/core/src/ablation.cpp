#include "moereid/ablation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace moereid::study {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::kModules: return "modules";
    case Axis::kRouteType: return "route_type";
    case Axis::kSampling: return "sampling_strategy";
    case Axis::kCaptionQuality: return "caption_quality";
    case Axis::kExpertCount: return "expert_count";
  }
  return "?";
}

Axis axis_from_name(const std::string& s) {
  if (s == "modules") return Axis::kModules;
  if (s == "route_type") return Axis::kRouteType;
  if (s == "sampling_strategy" || s == "sampling") return Axis::kSampling;
  if (s == "caption_quality") return Axis::kCaptionQuality;
  if (s == "expert_count") return Axis::kExpertCount;
  throw std::invalid_argument("unknown study axis: " + s);
}

data::DatasetIndex degrade_captions(const data::DatasetIndex& index, double quality_percent,
                                    std::uint64_t seed) {
  if (quality_percent <= 0.0 || quality_percent > 100.0)
    throw std::invalid_argument("caption quality must lie in (0, 100]");
  if (quality_percent == 100.0) return index;
  data::DatasetIndex out = index;
  for (std::size_t si = 0; si < out.samples.size(); ++si) {
    for (int m = 0; m < data::kNumModalities; ++m) {
      auto& record = out.samples[si].captions[static_cast<std::size_t>(m)];
      const auto n = static_cast<std::int64_t>(record.sentences.size());
      const auto keep = std::max<std::int64_t>(
          1, static_cast<std::int64_t>(std::ceil(quality_percent / 100.0 * static_cast<double>(n))));
      if (keep >= n) continue;
      RandomStream rs(mix_keys(seed, mix_keys(static_cast<std::uint64_t>(si),
                                              0xCAB0u + static_cast<std::uint64_t>(m))));
      const auto chosen = rs.sample_without_replacement(n, keep);  // ascending: original order
      std::ostringstream joined;
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        if (i) joined << ' ';
        joined << record.sentences[static_cast<std::size_t>(chosen[i])];
      }
      record = data::make_caption_record(joined.str());
    }
  }
  return out;
}

namespace {

struct RowSpec {
  std::string label;
  ModelConfig config;
  double caption_quality = 100.0;
};

std::vector<RowSpec> build_grid(const StudySpec& spec) {
  std::vector<RowSpec> rows;
  switch (spec.axis) {
    case Axis::kModules: {
      const bool patterns[4][3] = {
          {false, false, false},  // A: baseline
          {true, false, false},   // B: + feature aggregation
          {true, true, false},    // C: + semantic experts
          {true, true, true},     // D: + structure experts
      };
      const char* labels[4] = {"A:baseline", "B:+MMFA", "C:+MMFA+TMSE", "D:+MMFA+TMSE+CSSE"};
      for (int r = 0; r < 4; ++r) {
        RowSpec row;
        row.label = labels[r];
        row.config = spec.base;
        row.config.enable_mmfa = patterns[r][0];
        row.config.enable_tmse = patterns[r][1];
        row.config.enable_csse = patterns[r][2];
        rows.push_back(std::move(row));
      }
      break;
    }
    case Axis::kRouteType: {
      // Shared-route flags per (semantic, structure) bank.
      const bool patterns[4][2] = {
          {false, false}, {true, false}, {true, true}, {false, true}};
      const char* labels[4] = {"A:specific/specific", "B:shared/specific", "C:shared/shared",
                               "D:specific/shared"};
      for (int r = 0; r < 4; ++r) {
        RowSpec row;
        row.label = labels[r];
        row.config = spec.base;
        row.config.tmse_route =
            patterns[r][0] ? RouteScope::kModalityShared : RouteScope::kModalitySpecific;
        row.config.csse_route =
            patterns[r][1] ? RouteScope::kModalityShared : RouteScope::kModalitySpecific;
        rows.push_back(std::move(row));
      }
      break;
    }
    case Axis::kSampling: {
      const tmse::SamplingStrategy strategies[4] = {
          tmse::SamplingStrategy::kAllToken, tmse::SamplingStrategy::kTopK,
          tmse::SamplingStrategy::kFixedSigma, tmse::SamplingStrategy::kDynamic};
      for (const auto s : strategies) {
        RowSpec row;
        row.label = tmse::sampling_strategy_name(s);
        row.config = spec.base;
        row.config.sampling = s;
        rows.push_back(std::move(row));
      }
      break;
    }
    case Axis::kCaptionQuality: {
      for (double q : spec.caption_qualities) {
        RowSpec row;
        std::ostringstream label;
        label << q << "%";
        row.label = label.str();
        row.config = spec.base;
        row.caption_quality = q;
        rows.push_back(std::move(row));
      }
      break;
    }
    case Axis::kExpertCount: {
      for (int n : spec.expert_counts) {
        RowSpec row;
        row.label = "N_T=" + std::to_string(n);
        row.config = spec.base;
        row.config.num_semantic_experts = n;
        rows.push_back(std::move(row));
      }
      break;
    }
  }
  return rows;
}

nlohmann::json config_delta(const ModelConfig& base, const ModelConfig& cfg, double quality) {
  nlohmann::json jb = base;
  nlohmann::json jc = cfg;
  nlohmann::json delta = nlohmann::json::object();
  for (auto it = jc.begin(); it != jc.end(); ++it)
    if (!jb.contains(it.key()) || jb[it.key()] != it.value()) delta[it.key()] = it.value();
  if (quality != 100.0) delta["caption_quality"] = quality;
  return delta;
}

}  // namespace

nlohmann::json StudyReport::to_json() const {
  nlohmann::json j;
  j["axis"] = axis_name(axis);
  j["budget"] = budget_echo;
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json jr;
    jr["label"] = row.label;
    jr["config_delta"] = row.config_delta;
    jr["failed"] = row.failed;
    if (row.failed) jr["error"] = row.error;
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& [seed, m] : row.per_seed)
      per_seed.push_back({{"seed", seed}, {"mAP", m.mAP}, {"R1", m.r1}, {"R5", m.r5}, {"R10", m.r10}});
    jr["per_seed"] = per_seed;
    jr["mean"] = {{"mAP", row.mean.mAP}, {"R1", row.mean.r1}, {"R5", row.mean.r5}, {"R10", row.mean.r10}};
    jrows.push_back(std::move(jr));
  }
  j["rows"] = std::move(jrows);
  return j;
}

std::string StudyReport::to_table() const {
  std::ostringstream out;
  out << "axis: " << axis_name(axis) << "\n";
  out << "row";
  for (int i = 0; i < 24 - 3; ++i) out << ' ';
  out << "mAP      R1       R5       R10\n";
  for (const auto& row : rows) {
    std::string label = row.label;
    if (label.size() > 23) label.resize(23);
    out << label;
    for (std::size_t i = label.size(); i < 24; ++i) out << ' ';
    if (row.failed) {
      out << "FAILED: " << row.error << "\n";
      continue;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8.4f %-8.4f %-8.4f %-8.4f", row.mean.mAP, row.mean.r1,
                  row.mean.r5, row.mean.r10);
    out << buf << "\n";
  }
  return out.str();
}

StudyReport run_study(const StudySpec& spec) {
  StudyReport report;
  report.axis = spec.axis;
  report.budget_echo = {{"steps", spec.budget.steps},
                        {"batch_ids", spec.budget.batch_ids},
                        {"samples_per_id", spec.budget.samples_per_id},
                        {"seeds", spec.seeds},
                        {"dataset",
                         {{"num_ids", spec.dataset.num_ids},
                          {"samples_per_id", spec.dataset.samples_per_id},
                          {"height", spec.dataset.height},
                          {"width", spec.dataset.width},
                          {"seed", spec.dataset.seed},
                          {"object_type", data::object_type_name(spec.dataset.object_type)}}}};

  for (const RowSpec& row_spec : build_grid(spec)) {
    StudyRow row;
    row.label = row_spec.label;
    row.config_delta = config_delta(spec.base, row_spec.config, row_spec.caption_quality);
    try {
      for (const std::uint64_t seed : spec.seeds) {
        data::SyntheticSpec ds = spec.dataset;
        ds.seed = mix_keys(spec.dataset.seed, seed);
        data::DatasetIndex index = data::generate_synthetic(ds);
        if (row_spec.caption_quality != 100.0)
          index = degrade_captions(index, row_spec.caption_quality, seed);

        ModelConfig cfg = row_spec.config;
        cfg.seed = seed;
        Model model(cfg, index.num_train_identities());
        TrainConfig tc = spec.budget;
        tc.seed = seed;
        if (spec.run_log_dir.empty()) {
          tc.out_dir.clear();  // keep runs in memory
        } else {
          std::string safe_label = row.label;
          for (char& c : safe_label)
            if (c == '/' || c == ':' || c == '%') c = '_';
          tc.out_dir = spec.run_log_dir / safe_label / std::to_string(seed);
        }
        const TrainResult tr = train_model(model, index, tc);
        RunMetrics m;
        if (tr.final_metrics) {
          m.mAP = tr.final_metrics->mAP;
          m.r1 = tr.final_metrics->r1;
          m.r5 = tr.final_metrics->r5;
          m.r10 = tr.final_metrics->r10;
        }
        row.per_seed.emplace_back(seed, m);
      }
      for (const auto& [_, m] : row.per_seed) {
        row.mean.mAP += m.mAP / static_cast<double>(row.per_seed.size());
        row.mean.r1 += m.r1 / static_cast<double>(row.per_seed.size());
        row.mean.r5 += m.r5 / static_cast<double>(row.per_seed.size());
        row.mean.r10 += m.r10 / static_cast<double>(row.per_seed.size());
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace moereid::study
