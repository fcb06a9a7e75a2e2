#include "moereid/data.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace moereid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("moereid_data_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool samples_identical(const data::MultiModalSample& a, const data::MultiModalSample& b) {
  if (a.sample_id != b.sample_id || a.identity != b.identity || a.camera != b.camera ||
      a.time_label != b.time_label)
    return false;
  for (int m = 0; m < 3; ++m)
    if (!(a.images[m] == b.images[m]) || a.captions[m].text != b.captions[m].text) return false;
  return true;
}

}  // namespace

TEST_CASE("sentence segmentation splits on terminators and round-trips") {
  const auto s = data::split_sentences("A red coat. Carrying a bag!  Night scene? done.");
  REQUIRE(s.size() == 4);
  CHECK(s[0] == "A red coat.");
  CHECK(s[1] == "Carrying a bag!");
  CHECK(s[2] == "Night scene?");
  CHECK(s[3] == "done.");

  // Joining reproduces the text modulo whitespace.
  const std::string text = "One sentence. Another one. And a third.";
  const auto rec = data::make_caption_record(text);
  std::string joined;
  for (std::size_t i = 0; i < rec.sentences.size(); ++i) {
    if (i) joined += ' ';
    joined += rec.sentences[i];
  }
  std::string squashed;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) squashed += c;
  std::string joined_squashed;
  for (char c : joined)
    if (!std::isspace(static_cast<unsigned char>(c))) joined_squashed += c;
  CHECK(squashed == joined_squashed);

  CHECK(data::split_sentences("no terminator here").size() == 1);
  CHECK(data::split_sentences("Dotted.but.not.split otherwise. yes.").size() == 2);
}

TEST_CASE("synthetic generation: counts, determinism, size guard") {
  const auto small = data::generate_synthetic({.num_ids = 2, .samples_per_id = 2, .seed = 0});
  CHECK(small.samples.size() == 4);
  CHECK(small.num_identities() == 2);
  for (const auto& s : small.samples)
    for (int m = 0; m < 3; ++m) CHECK(!s.captions[m].text.empty());

  const data::SyntheticSpec spec{.num_ids = 8, .samples_per_id = 4, .seed = 7};
  const auto a = data::generate_synthetic(spec);
  const auto b = data::generate_synthetic(spec);
  REQUIRE(a.samples.size() == 32);
  CHECK(a.num_identities() == 8);
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(samples_identical(a.samples[i], b.samples[i]));

  CHECK_THROWS(data::generate_synthetic({.num_ids = 1, .samples_per_id = 4}));
  CHECK_THROWS(data::generate_synthetic({.num_ids = 4, .samples_per_id = 1}));
  CHECK_THROWS(data::generate_synthetic({.num_ids = 4, .samples_per_id = 4, .height = 8, .width = 16}));
  CHECK_THROWS(data::generate_synthetic({.num_ids = 4, .samples_per_id = 4, .height = 32, .width = 8}));
}

TEST_CASE("synthetic captions carry the generator's own attribute table") {
  const auto ds = data::generate_synthetic_with_truth({.num_ids = 6, .samples_per_id = 3, .seed = 3});
  for (std::size_t si = 0; si < ds.index.samples.size(); ++si) {
    const auto& sample = ds.index.samples[si];
    const auto& attrs = ds.truth.identity_attrs[static_cast<std::size_t>(sample.identity)];
    const auto& [supp_name, supp_modality] = ds.truth.suppressed[static_cast<std::size_t>(sample.identity)];

    // The visible-band caption always names the ground-truth color token.
    const std::string color_token = attrs.at("upper clothing").substr(0, attrs.at("upper clothing").find(' '));
    CHECK(sample.captions[0].text.find(color_token) != std::string::npos);

    for (int m = 0; m < 3; ++m) {
      for (const auto& [name, value] : attrs) {
        const bool suppressed_here = name == supp_name && m == static_cast<int>(supp_modality);
        const bool mentioned = sample.captions[m].text.find(value) != std::string::npos;
        if (suppressed_here)
          CHECK(!mentioned);
        else
          CHECK(mentioned);
      }
      // Environment facts are always present.
      const auto& env = ds.truth.environment_attrs[si];
      for (const auto& [name, value] : env)
        CHECK(sample.captions[m].text.find(value) != std::string::npos);
    }
  }
}

TEST_CASE("vehicle generation uses the vehicle attribute vocabulary") {
  const auto ds = data::generate_synthetic_with_truth(
      {.num_ids = 3, .samples_per_id = 2, .seed = 21, .object_type = data::ObjectType::kVehicle});
  CHECK(ds.index.object_type == data::ObjectType::kVehicle);
  for (std::size_t id = 0; id < 3; ++id) {
    const auto& attrs = ds.truth.identity_attrs[id];
    CHECK(attrs.count("vehicle type") == 1);
    CHECK(attrs.count("vehicle color") == 1);
    CHECK(ds.truth.suppressed[id].first == "roof cargo");
  }
  for (const auto& s : ds.index.samples) {
    const auto& attrs = ds.truth.identity_attrs[static_cast<std::size_t>(s.identity)];
    CHECK(s.captions[0].text.find(attrs.at("vehicle color")) != std::string::npos);
  }
}

TEST_CASE("write + load round trip preserves the index") {
  const auto dir = temp_dir("roundtrip");
  const auto ds = data::generate_synthetic({.num_ids = 3, .samples_per_id = 2, .seed = 5});
  data::write_dataset(ds, dir, false);
  CHECK_THROWS(data::write_dataset(ds, dir, false));  // non-empty target without force

  const auto loaded = data::load_dataset(dir, data::ObjectType::kPerson);
  REQUIRE(loaded.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(samples_identical(ds.samples[i], loaded.samples[i]));
  fs::remove_all(dir);
}

TEST_CASE("loader errors name the sample and modality") {
  const auto dir = temp_dir("loader_errors");
  const auto ds = data::generate_synthetic({.num_ids = 2, .samples_per_id = 2, .seed = 1});
  data::write_dataset(ds, dir, true);

  SUBCASE("empty root") {
    const auto empty = temp_dir("empty_root");
    CHECK_THROWS_WITH_AS(data::load_dataset(empty, data::ObjectType::kPerson),
                         doctest::Contains("no samples found"), std::runtime_error);
    fs::remove_all(empty);
  }
  SUBCASE("missing modality file") {
    fs::remove(dir / "nir" / "id001_s00.png");
    try {
      data::load_dataset(dir, data::ObjectType::kPerson);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("id001_s00") != std::string::npos);
      CHECK(msg.find("nir") != std::string::npos);
    }
  }
  SUBCASE("malformed caption sidecar") {
    std::ofstream bad(dir / "captions" / "id000_s01.json");
    bad << "{ not json";
    bad.close();
    try {
      data::load_dataset(dir, data::ObjectType::kPerson);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("id000_s01.json") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("loader enforces closed-set splits and person train/test disjointness") {
  const auto dir = temp_dir("splits");
  auto ds = data::generate_synthetic({.num_ids = 4, .samples_per_id = 3, .seed = 9});
  // identities 0,1 train; 2,3 test with one query and gallery sample each
  for (auto& s : ds.samples) {
    if (s.identity < 2) continue;
    const char last = s.sample_id.back();
    s.split = last == '0' ? data::Split::kQuery : data::Split::kGallery;
  }
  data::write_dataset(ds, dir, true);
  const auto loaded = data::load_dataset(dir, data::ObjectType::kPerson);
  CHECK(loaded.num_train_identities() == 2);

  std::set<int> query_ids, gallery_ids;
  for (const auto& s : loaded.samples) {
    if (s.split == data::Split::kQuery) query_ids.insert(s.identity);
    if (s.split == data::Split::kGallery) gallery_ids.insert(s.identity);
  }
  for (int q : query_ids) CHECK(gallery_ids.count(q) == 1);

  SUBCASE("query identity missing from gallery fails") {
    auto broken = ds;
    for (auto& s : broken.samples)
      if (s.identity == 3 && s.split == data::Split::kGallery) s.split = data::Split::kQuery;
    data::write_dataset(broken, dir, true);
    CHECK_THROWS(data::load_dataset(dir, data::ObjectType::kPerson));
  }
  SUBCASE("person train/test identity overlap fails") {
    auto broken = ds;
    // one sample of train identity 0 moves to the gallery: overlap
    for (auto& s : broken.samples)
      if (s.identity == 0 && s.sample_id.back() == '0') s.split = data::Split::kGallery;
    data::write_dataset(broken, dir, true);
    CHECK_THROWS(data::load_dataset(dir, data::ObjectType::kPerson));
    // the same layout is legal for vehicles
    CHECK_NOTHROW(data::load_dataset(dir, data::ObjectType::kVehicle));
  }
  fs::remove_all(dir);
}

TEST_CASE("loader handles a benchmark-sized root" * doctest::timeout(120)) {
  const auto dir = temp_dir("big_root");
  // 4,787 samples over 201 identities and 4 cameras, person-style splits.
  for (const char* sub : {"rgb", "nir", "tir", "captions"}) fs::create_directories(dir / sub);
  Image tiny(16, 16);
  save_png(tiny, dir / "rgb" / "seed.png");
  std::ofstream cap_seed(dir / "captions" / "seed.json");
  cap_seed << R"({"rgb":"A sample.","nir":"A sample.","tir":"A sample."})";
  cap_seed.close();

  std::ofstream meta(dir / "meta.csv");
  meta << "sample_id,identity,camera,time_label,split\n";
  const int total = 4787;
  const int train_ids = 101;  // identities 0..100 train, 101..200 test
  for (int i = 0; i < total; ++i) {
    const int identity = i % 201;
    const int camera = i % 4;
    std::string split = "train";
    if (identity >= train_ids) split = (i % 2 == 0) ? "query" : "gallery";
    const std::string sid = "s" + std::to_string(i);
    for (const char* sub : {"rgb", "nir", "tir"})
      fs::create_hard_link(dir / "rgb" / "seed.png", dir / sub / (sid + ".png"));
    fs::create_hard_link(dir / "captions" / "seed.json", dir / "captions" / (sid + ".json"));
    meta << sid << ',' << identity << ',' << camera << ",0," << split << "\n";
  }
  meta.close();
  // every test identity needs at least one gallery sample; the alternating
  // assignment above guarantees it for 2+ samples per identity
  const auto loaded = data::load_dataset(dir, data::ObjectType::kPerson);
  CHECK(loaded.samples.size() == 4787);
  CHECK(loaded.num_identities() == 201);
  CHECK(loaded.num_cameras() == 4);
  CHECK(loaded.num_train_identities() == 101);
  fs::remove_all(dir);
}

TEST_CASE("augmentation: identity, involution, cross-modal alignment") {
  const auto ds = data::generate_synthetic({.num_ids = 2, .samples_per_id = 2, .seed = 4});
  const auto& sample = ds.samples[0];

  SUBCASE("no-op configuration is pixel identical") {
    const data::AugmentationConfig cfg{.flip_prob = 0.0, .pad_pixels = 0, .erase_prob = 0.0, .seed = 1};
    const auto out = data::augment(sample, cfg, 0);
    for (int m = 0; m < 3; ++m) CHECK(out.images[m] == sample.images[m]);
  }
  SUBCASE("certain flip applied twice restores the original") {
    const data::AugmentationConfig cfg{.flip_prob = 1.0, .pad_pixels = 0, .erase_prob = 0.0, .seed = 1};
    const auto once = data::augment(sample, cfg, 3);
    const auto twice = data::augment(once, cfg, 4);
    for (int m = 0; m < 3; ++m) {
      CHECK(!(once.images[m] == sample.images[m]));
      CHECK(twice.images[m] == sample.images[m]);
    }
  }
  SUBCASE("one geometric draw is shared by all modalities") {
    // Put a unique marker pixel at the same location in every modality.
    data::MultiModalSample marked = sample;
    for (int m = 0; m < 3; ++m) {
      for (auto& px : marked.images[m].pixels) px = 0;
      marked.images[m].at(9, 3, 0) = 255;
      marked.images[m].at(9, 3, 1) = 255;
      marked.images[m].at(9, 3, 2) = 255;
    }
    const data::AugmentationConfig cfg{
        .flip_prob = 0.5, .pad_pixels = 4, .crop_h = 32, .crop_w = 16, .erase_prob = 0.0, .seed = 11};
    for (std::uint64_t key = 0; key < 12; ++key) {
      const auto out = data::augment(marked, cfg, key);
      std::array<std::pair<int, int>, 3> peak{};
      for (int m = 0; m < 3; ++m) {
        int by = -1, bx = -1;
        for (int y = 0; y < out.images[m].height; ++y)
          for (int x = 0; x < out.images[m].width; ++x)
            if (out.images[m].at(y, x, 0) == 255) {
              by = y;
              bx = x;
            }
        peak[static_cast<std::size_t>(m)] = {by, bx};
      }
      CHECK(peak[0] == peak[1]);
      CHECK(peak[0] == peak[2]);
    }
  }
  SUBCASE("erasing draws independently per modality") {
    const data::AugmentationConfig cfg{.flip_prob = 0.0, .pad_pixels = 0, .erase_prob = 1.0, .seed = 2};
    const auto out = data::augment(sample, cfg, 5);
    // with probability ~1 the random rectangles differ between modalities
    int diffs = 0;
    for (int m = 0; m < 3; ++m) {
      Image gray = sample.images[m];
      if (!(out.images[m] == gray)) ++diffs;
    }
    CHECK(diffs == 3);
    CHECK(!(out.images[0] == out.images[1]));
  }
  SUBCASE("crop larger than padded image is rejected") {
    const data::AugmentationConfig cfg{.flip_prob = 0.0, .pad_pixels = 1, .crop_h = 40, .crop_w = 16};
    CHECK_THROWS(data::augment(sample, cfg, 0));
  }
  SUBCASE("augmentation is pure given the draw key") {
    const data::AugmentationConfig cfg{
        .flip_prob = 0.5, .pad_pixels = 2, .erase_prob = 0.5, .seed = 21};
    const auto a = data::augment(sample, cfg, 17);
    const auto b = data::augment(sample, cfg, 17);
    for (int m = 0; m < 3; ++m) CHECK(a.images[m] == b.images[m]);
  }
}

TEST_CASE("PK batches: exact composition, resampling, determinism") {
  const auto ds = data::generate_synthetic({.num_ids = 8, .samples_per_id = 4, .seed = 7});
  data::PkBatchSampler sampler(ds, 4, 4, 99);

  const auto batches = sampler.epoch(0);
  std::set<int> covered;
  for (const auto& batch : batches) {
    CHECK(batch.sample_indices.size() == 16);
    std::set<int> ids;
    for (std::size_t idx : batch.sample_indices) ids.insert(ds.samples[idx].identity);
    CHECK(ids.size() == 4);
    covered.insert(ids.begin(), ids.end());
  }
  CHECK(covered.size() == 8);  // one epoch touches every identity

  SUBCASE("short identities are resampled with replacement") {
    auto small = ds;
    small.samples.resize(26);  // identity 6 keeps 2 samples, identity 7 vanishes
    data::PkBatchSampler s2(small, 4, 4, 1);
    for (const auto& batch : s2.epoch(0)) {
      CHECK(batch.sample_indices.size() == 16);
      std::map<int, int> count;
      for (std::size_t idx : batch.sample_indices) count[small.samples[idx].identity]++;
      for (const auto& [id, n] : count) CHECK(n == 4);
    }
  }
  SUBCASE("same seed reproduces the same batch stream") {
    data::PkBatchSampler s2(ds, 4, 4, 99);
    for (std::int64_t e = 0; e < 3; ++e) {
      const auto x = sampler.epoch(e);
      const auto y = s2.epoch(e);
      REQUIRE(x.size() == y.size());
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].sample_indices == y[i].sample_indices);
    }
  }
  SUBCASE("fewer than two identities is rejected") {
    auto lone = ds;
    lone.samples.resize(4);
    CHECK_THROWS(data::PkBatchSampler(lone, 2, 2, 0));
  }
}
