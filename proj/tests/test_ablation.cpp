#include "moereid/ablation.hpp"

#include <doctest.h>

using namespace moereid;
using namespace moereid::study;

namespace {

StudySpec tiny_spec(Axis axis) {
  StudySpec spec;
  spec.axis = axis;
  spec.base.encoder.image_h = 16;
  spec.base.encoder.image_w = 16;
  spec.base.encoder.dim = 16;
  spec.base.encoder.depth = 1;
  spec.base.num_semantic_experts = 2;
  spec.base.num_structure_experts = 2;
  spec.base.dropout = 0.0;
  spec.budget.steps = 2;
  spec.budget.batch_ids = 2;
  spec.budget.samples_per_id = 2;
  spec.dataset.num_ids = 3;
  spec.dataset.samples_per_id = 2;
  spec.dataset.height = 16;
  spec.dataset.width = 16;
  spec.dataset.seed = 5;
  spec.seeds = {1};
  spec.expert_counts = {1, 2};
  return spec;
}

}  // namespace

TEST_CASE("caption degradation: identity, ceiling rule, floor") {
  const auto ds = data::generate_synthetic({.num_ids = 2, .samples_per_id = 2, .seed = 1});
  SUBCASE("full quality leaves captions untouched") {
    const auto same = degrade_captions(ds, 100.0, 3);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      for (int m = 0; m < 3; ++m)
        CHECK(same.samples[i].captions[m].text == ds.samples[i].captions[m].text);
  }
  SUBCASE("35% of a three-sentence caption keeps two sentences") {
    auto three = ds;
    for (auto& s : three.samples)
      for (int m = 0; m < 3; ++m)
        s.captions[m] = data::make_caption_record("One fact. Two facts. Three facts.");
    const auto degraded = degrade_captions(three, 35.0, 7);
    for (const auto& s : degraded.samples)
      for (int m = 0; m < 3; ++m) CHECK(s.captions[m].sentences.size() == 2);
  }
  SUBCASE("vanishing quality still keeps one sentence") {
    const auto degraded = degrade_captions(ds, 0.5, 9);
    for (const auto& s : degraded.samples)
      for (int m = 0; m < 3; ++m) CHECK(s.captions[m].sentences.size() == 1);
  }
  SUBCASE("kept sentences are a subset in original order") {
    const auto degraded = degrade_captions(ds, 50.0, 11);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      for (int m = 0; m < 3; ++m) {
        std::size_t cursor = 0;
        for (const auto& sentence : degraded.samples[i].captions[m].sentences) {
          bool found = false;
          for (; cursor < ds.samples[i].captions[m].sentences.size(); ++cursor)
            if (ds.samples[i].captions[m].sentences[cursor] == sentence) {
              found = true;
              ++cursor;
              break;
            }
          CHECK(found);
        }
      }
  }
  SUBCASE("degradation is deterministic under the seed") {
    const auto a = degrade_captions(ds, 50.0, 13);
    const auto b = degrade_captions(ds, 50.0, 13);
    for (std::size_t i = 0; i < a.samples.size(); ++i)
      for (int m = 0; m < 3; ++m)
        CHECK(a.samples[i].captions[m].text == b.samples[i].captions[m].text);
  }
  CHECK_THROWS(degrade_captions(ds, 0.0, 1));
  CHECK_THROWS(degrade_captions(ds, 120.0, 1));
}

TEST_CASE("module study reproduces the four-row toggle ladder") {
  const auto report = run_study(tiny_spec(Axis::kModules));
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].label == "A:baseline");
  CHECK(report.rows[1].label == "B:+MMFA");
  CHECK(report.rows[2].label == "C:+MMFA+TMSE");
  CHECK(report.rows[3].label == "D:+MMFA+TMSE+CSSE");
  for (const auto& row : report.rows) {
    CHECK(!row.failed);
    CHECK(row.per_seed.size() == 1);
    CHECK(row.mean.mAP >= 0.0);
    CHECK(row.mean.mAP <= 1.0);
  }
  // toggle pattern recorded in the config deltas
  CHECK(report.rows[0].config_delta.at("enable_mmfa") == false);
  CHECK(report.rows[1].config_delta.at("enable_tmse") == false);
  const bool row_b_keeps_mmfa = !report.rows[1].config_delta.contains("enable_mmfa") ||
                                report.rows[1].config_delta.at("enable_mmfa") == true;
  CHECK(row_b_keeps_mmfa);
  CHECK(report.rows[3].config_delta.empty());  // row D is the full base config
}

TEST_CASE("route study emits the four scope combinations") {
  const auto report = run_study(tiny_spec(Axis::kRouteType));
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].label == "A:specific/specific");
  CHECK(report.rows[1].label == "B:shared/specific");
  CHECK(report.rows[2].label == "C:shared/shared");
  CHECK(report.rows[3].label == "D:specific/shared");
  for (const auto& row : report.rows) CHECK(!row.failed);
}

TEST_CASE("sampling study covers every strategy") {
  const auto report = run_study(tiny_spec(Axis::kSampling));
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].label == "all_token");
  CHECK(report.rows[1].label == "top_k");
  CHECK(report.rows[2].label == "fixed_sigma");
  CHECK(report.rows[3].label == "dynamic");
  for (const auto& row : report.rows) CHECK(!row.failed);
}

TEST_CASE("caption-quality study runs the 35/70/100 grid") {
  const auto report = run_study(tiny_spec(Axis::kCaptionQuality));
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].label == "35%");
  CHECK(report.rows[1].label == "70%");
  CHECK(report.rows[2].label == "100%");
  for (const auto& row : report.rows) CHECK(!row.failed);
}

TEST_CASE("expert-count sweep emits one row per count") {
  auto spec = tiny_spec(Axis::kExpertCount);
  spec.expert_counts = {1, 2, 3};
  const auto report = run_study(spec);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].label == "N_T=1");
  CHECK(report.rows[2].label == "N_T=3");
}

TEST_CASE("reports are reproducible and render as tables") {
  const auto spec = tiny_spec(Axis::kModules);
  const auto a = run_study(spec);
  const auto b = run_study(spec);
  CHECK(a.to_json().dump() == b.to_json().dump());
  const std::string table = a.to_table();
  CHECK(table.find("A:baseline") != std::string::npos);
  CHECK(table.find("mAP") != std::string::npos);
}

TEST_CASE("a crashing configuration is recorded and the study continues") {
  auto spec = tiny_spec(Axis::kExpertCount);
  spec.expert_counts = {1, 0, 2};  // zero experts cannot build
  const auto report = run_study(spec);
  REQUIRE(report.rows.size() == 3);
  CHECK(!report.rows[0].failed);
  CHECK(report.rows[1].failed);
  CHECK(!report.rows[1].error.empty());
  CHECK(!report.rows[2].failed);
}
