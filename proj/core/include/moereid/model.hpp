#pragma once

#include "moereid/csse.hpp"
#include "moereid/data.hpp"
#include "moereid/encoders.hpp"
#include "moereid/mmfa.hpp"
#include "moereid/tmse.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <vector>

namespace moereid {

enum class RouteScope { kModalitySpecific, kModalityShared };

const char* route_scope_name(RouteScope s);
RouteScope route_scope_from_name(const std::string& s);

struct ModelConfig {
  enc::EncoderConfig encoder;

  int num_semantic_experts = 3;   // TMSE bank size
  int num_structure_experts = 3;  // CSSE bank size
  int expert_expansion = 2;
  double dropout = 0.1;
  int k_max = 3;

  bool enable_tmse = true;
  bool enable_csse = true;
  bool enable_mmfa = true;
  bool modulate_at_eval = false;

  tmse::SamplingStrategy sampling = tmse::SamplingStrategy::kDynamic;
  double fixed_sigma = 0.0;
  double top_k_fraction = 0.5;
  ad::GateMode gate_mode = ad::GateMode::kHard;

  RouteScope tmse_route = RouteScope::kModalitySpecific;
  RouteScope csse_route = RouteScope::kModalityShared;

  int mmfa_heads = 4;
  int mmfa_ffn_expansion = 2;
  bool mmfa_pool_queries = false;

  double margin = 0.3;
  double label_smoothing = 0.1;

  std::uint64_t seed = 0;

  void validate() const;
  Index embedding_dim() const;
  int num_expert_entries() const;  // entries seen by the aggregation bank
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct BatchSample {
  std::array<Image, 3> images;
  std::array<data::CaptionRecord, 3> captions;
  int label = 0;
};

struct Batch {
  std::vector<BatchSample> samples;
  std::vector<int> labels() const;
};

struct SampleDiagnostics {
  std::vector<std::array<tmse::RouteState, 3>> routes;  // per semantic expert
  Tensor omega;                                         // structure routing weights
  std::vector<Tensor> structure_norms;                  // per structure expert, (3N)x1 row norms
  std::vector<std::vector<Tensor>> attention;           // per entry, per head
};

struct ForwardDiagnostics {
  std::vector<SampleDiagnostics> samples;
};

struct ForwardOut {
  ad::NodeId embeddings = -1;  // B x embedding_dim
  ad::NodeId logits = -1;      // B x C
};

class Model {
 public:
  Model(const ModelConfig& cfg, int num_classes);

  ForwardOut forward(ad::Tape& tape, const Batch& batch, bool training, long step,
                     ForwardDiagnostics* diagnostics = nullptr);

  // Eval-mode embedding of a single sample (plain values).
  Tensor embed(const BatchSample& sample);

  const ModelConfig& config() const { return cfg_; }
  int num_classes() const { return num_classes_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const enc::TextEncoder& text_encoder() const { return *text_encoder_; }
  const enc::VisualEncoder& visual_encoder() const { return *visual_encoder_; }
  const tmse::SemanticBank* semantic_bank() const { return semantic_bank_.get(); }
  const csse::StructureBank* structure_bank() const { return structure_bank_.get(); }

 private:
  ModelConfig cfg_;
  int num_classes_;
  ParamStore store_;
  std::unique_ptr<enc::VisualEncoder> visual_encoder_;
  std::unique_ptr<enc::TextEncoder> text_encoder_;
  std::unique_ptr<tmse::SemanticBank> semantic_bank_;
  std::unique_ptr<csse::StructureBank> structure_bank_;
  std::unique_ptr<mmfa::AggregationBank> aggregation_;
  nn::Linear classifier_;
};

}  // namespace moereid
