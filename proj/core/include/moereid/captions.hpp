#pragma once

#include "moereid/data.hpp"
#include "moereid/image.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace moereid::captions {

struct ConfidenceAttribute {
  std::string name;
  std::string value;
  double confidence = 0.0;
  std::string provenance = "native";  // "native" or "borrowed-from:<modality>"

  bool operator==(const ConfidenceAttribute&) const = default;
};

using AttributeList = std::vector<ConfidenceAttribute>;
using ModalityAttrs = std::array<AttributeList, 3>;

struct AttributeSchema {
  data::ObjectType object_type = data::ObjectType::kPerson;
  std::vector<std::string> appearance;
  std::vector<std::string> environment;  // scene facts, never borrowed across modalities

  std::vector<std::string> all() const;
  bool is_environment(const std::string& name) const;

  static AttributeSchema person();
  static AttributeSchema vehicle();
  static AttributeSchema for_type(data::ObjectType t);
};

// Prompt construction -----------------------------------------------------------

std::string build_attribute_prompt(const AttributeSchema& schema, data::Modality modality);
std::string build_caption_prompt(const AttributeSchema& schema, data::Modality modality,
                                 const AttributeList& attrs);

// Response parsing ---------------------------------------------------------------

// Tolerant parse of a structured backend response. Missing attributes become
// ("unknown", 0.0); confidences are clamped to [0,1]. Throws on responses with
// no recoverable structure, carrying the raw text.
AttributeList parse_attribute_response(const std::string& raw, const AttributeSchema& schema);

// Merge and complement ------------------------------------------------------------

// Per attribute, the (value, confidence) with maximal confidence wins; ties go
// to the earlier backend in the given (priority) order.
AttributeList merge_backends(const std::vector<std::pair<std::string, AttributeList>>& per_backend,
                             const AttributeSchema& schema);

struct ComplementConfig {
  std::vector<std::string> low_markers = {"unknown", "unclear", "not carrying"};
  double threshold = 0.5;

  bool is_low(const std::string& value) const;
};

ModalityAttrs complement_modalities(const ModalityAttrs& merged, const AttributeSchema& schema,
                                    const ComplementConfig& cfg);

// Caption composition --------------------------------------------------------------

// Deterministic renderer: one sentence per attribute, appearance first,
// environment last; appearance attributes with low-marker values are skipped.
std::string compose_caption_template(const AttributeList& attrs, const AttributeSchema& schema,
                                     const ComplementConfig& cfg);

// Clients ---------------------------------------------------------------------------

// Backend interface. `image` may be null for text-only generation.
class MllmClient {
 public:
  virtual ~MllmClient() = default;
  virtual std::string backend_id() const = 0;
  virtual std::string generate(const std::string& prompt, const Image* image) = 0;
};

// Stable fixture key over (backend, prompt, image content).
std::string fixture_key(const std::string& backend, const std::string& prompt, const Image* image);

// Serves responses from a fixture directory; fully offline and deterministic.
class ReplayClient : public MllmClient {
 public:
  ReplayClient(std::string backend, std::filesystem::path fixture_dir);
  std::string backend_id() const override { return backend_; }
  std::string generate(const std::string& prompt, const Image* image) override;

 private:
  std::string backend_;
  std::filesystem::path dir_;
};

// Wraps a live client and writes every exchange into the fixture store.
class RecordingClient : public MllmClient {
 public:
  RecordingClient(MllmClient& inner, std::filesystem::path fixture_dir);
  std::string backend_id() const override { return inner_->backend_id(); }
  std::string generate(const std::string& prompt, const Image* image) override;

 private:
  MllmClient* inner_;
  std::filesystem::path dir_;
};

void write_fixture(const std::filesystem::path& dir, const std::string& key, const std::string& response);
std::optional<std::string> read_fixture(const std::filesystem::path& dir, const std::string& key);

// Pipeline ----------------------------------------------------------------------------

enum class Composer { kTemplate, kLlm };

struct Sidecar {
  std::string sample_id;
  std::array<std::string, 3> captions;
  bool has_attributes = false;
  ModalityAttrs attributes;
};

void write_sidecar_atomic(const std::filesystem::path& path, const Sidecar& sc);
Sidecar read_sidecar(const std::filesystem::path& path);

struct PipelineConfig {
  ComplementConfig complement;
  Composer composer = Composer::kTemplate;
  int concurrency = 4;
  bool force = false;  // reprocess samples whose sidecar already exists
};

struct PipelineSummary {
  int processed = 0;
  int skipped = 0;
  int failed = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (sample_id, reason)
};

// prompt -> parse -> merge over backends -> cross-modality complement ->
// compose; sidecars written atomically under captions_dir, resumable.
PipelineSummary run_pipeline(const data::DatasetIndex& index,
                             const std::vector<MllmClient*>& backends, MllmClient* composer_client,
                             const PipelineConfig& cfg, const std::filesystem::path& captions_dir);

// Emits replay fixtures for a synthetic dataset: two scripted backends whose
// responses encode the generator's ground truth, including the deliberately
// withheld attribute.
inline constexpr std::array<const char*, 2> kSyntheticBackends = {"backend-a", "backend-b"};
void write_synthetic_fixtures(const data::DatasetIndex& index, const data::SyntheticTruth& truth,
                              const std::filesystem::path& fixture_dir);

}  // namespace moereid::captions
