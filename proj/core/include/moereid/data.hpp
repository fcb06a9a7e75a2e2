#pragma once

#include "moereid/image.hpp"
#include "moereid/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace moereid::data {

enum class Modality : int { kRgb = 0, kNir = 1, kTir = 2 };
inline constexpr std::array<const char*, 3> kModalityNames = {"rgb", "nir", "tir"};
inline constexpr int kNumModalities = 3;

enum class Split { kTrain, kQuery, kGallery };
enum class ObjectType { kPerson, kVehicle };

const char* split_name(Split s);
Split split_from_name(const std::string& s);
const char* object_type_name(ObjectType t);
ObjectType object_type_from_name(const std::string& s);

struct CaptionRecord {
  std::string text;
  std::vector<std::string> sentences;
};

// Splits on '.', '!' or '?' followed by whitespace (or end); trims empties.
std::vector<std::string> split_sentences(const std::string& text);
CaptionRecord make_caption_record(std::string text);

struct MultiModalSample {
  std::string sample_id;
  int identity = 0;
  int camera = 0;
  int time_label = 0;
  Split split = Split::kTrain;
  std::array<Image, 3> images;
  std::array<CaptionRecord, 3> captions;
};

struct DatasetIndex {
  std::filesystem::path root;  // empty for in-memory datasets
  ObjectType object_type = ObjectType::kPerson;
  std::vector<MultiModalSample> samples;
  bool has_time_labels = true;

  std::vector<std::size_t> split_indices(Split s) const;
  int num_identities() const;
  int num_cameras() const;
  // Distinct identities in the train split; train labels are contiguous 0..C-1.
  int num_train_identities() const;
};

DatasetIndex load_dataset(const std::filesystem::path& root, ObjectType object_type);

// Synthetic fixture generation -------------------------------------------------

struct SyntheticSpec {
  int num_ids = 8;
  int samples_per_id = 4;
  int height = 32;
  int width = 16;
  std::uint64_t seed = 0;
  ObjectType object_type = ObjectType::kPerson;
};

// Ground truth behind a synthetic dataset: per-sample per-modality attribute
// tables, plus which attribute was deliberately withheld from which modality.
struct SyntheticTruth {
  // identity -> appearance attribute table (pre-suppression)
  std::vector<std::map<std::string, std::string>> identity_attrs;
  // identity -> (suppressed attribute name, modality it is withheld from)
  std::vector<std::pair<std::string, Modality>> suppressed;
  // sample index -> environment attribute table (shared across modalities)
  std::vector<std::map<std::string, std::string>> environment_attrs;
};

struct SyntheticDataset {
  DatasetIndex index;
  SyntheticTruth truth;
};

SyntheticDataset generate_synthetic_with_truth(const SyntheticSpec& spec);
DatasetIndex generate_synthetic(const SyntheticSpec& spec);

// Writes root/{rgb,nir,tir}/<id>.png, root/captions/<id>.json, root/meta.csv.
void write_dataset(const DatasetIndex& index, const std::filesystem::path& root, bool force);

// Augmentation ------------------------------------------------------------------

struct AugmentationConfig {
  double flip_prob = 0.5;
  int pad_pixels = 0;
  int crop_h = 0;  // 0 keeps original size
  int crop_w = 0;
  double erase_prob = 0.0;
  std::uint64_t seed = 0;

  void validate(int image_h, int image_w) const;
};

// Same geometric draw for all modalities; erasing drawn independently per
// modality. Pure given (cfg.seed, draw_key).
MultiModalSample augment(const MultiModalSample& sample, const AugmentationConfig& cfg,
                         std::uint64_t draw_key);

// Identity-balanced batching ------------------------------------------------------

struct PkBatch {
  std::vector<std::size_t> sample_indices;  // into DatasetIndex::samples
};

class PkBatchSampler {
 public:
  PkBatchSampler(const DatasetIndex& index, int num_ids_per_batch, int samples_per_id,
                 std::uint64_t seed);

  // Deterministic batch list for one epoch; every train identity appears.
  std::vector<PkBatch> epoch(std::int64_t epoch_index) const;
  int batch_size() const { return p_ * k_; }

 private:
  const DatasetIndex* index_;
  int p_;
  int k_;
  std::uint64_t seed_;
  std::vector<int> train_identities_;
  std::map<int, std::vector<std::size_t>> by_identity_;
};

}  // namespace moereid::data
