#include "moereid/model.hpp"

#include <stdexcept>

namespace moereid {

const char* route_scope_name(RouteScope s) {
  return s == RouteScope::kModalitySpecific ? "modality_specific" : "modality_shared";
}

RouteScope route_scope_from_name(const std::string& s) {
  if (s == "modality_specific") return RouteScope::kModalitySpecific;
  if (s == "modality_shared") return RouteScope::kModalityShared;
  throw std::invalid_argument("unknown route scope: " + s);
}

void ModelConfig::validate() const {
  encoder.validate();
  if (margin <= 0.0) throw std::invalid_argument("triplet margin must be > 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::invalid_argument("label smoothing outside [0,1)");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout outside [0,1)");
  if (enable_tmse && num_semantic_experts < 1)
    throw std::invalid_argument("TMSE enabled with no semantic experts");
  if (enable_csse && num_structure_experts < 1)
    throw std::invalid_argument("CSSE enabled with no structure experts");
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (top_k_fraction <= 0.0 || top_k_fraction > 1.0)
    throw std::invalid_argument("top_k_fraction outside (0,1]");
  if (encoder.dim % mmfa_heads != 0)
    throw std::invalid_argument("embedding dim must be divisible by aggregation heads");
}

int ModelConfig::num_expert_entries() const {
  if (!enable_mmfa) return 0;
  int entries = 0;
  if (enable_tmse) entries += num_semantic_experts;
  if (enable_csse) entries += 1;
  // With both expert banks off the raw concatenated tokens act as the single
  // expert entry the aggregation fuses.
  return entries > 0 ? entries : 1;
}

Index ModelConfig::embedding_dim() const {
  if (!enable_mmfa) return 3 * encoder.dim;  // concatenated modality class tokens
  const Index per_entry = mmfa_pool_queries ? encoder.dim : 3 * encoder.dim;
  return static_cast<Index>(num_expert_entries()) * per_entry;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"image_h", c.encoder.image_h},
      {"image_w", c.encoder.image_w},
      {"patch", c.encoder.patch},
      {"encoder_depth", c.encoder.depth},
      {"encoder_heads", c.encoder.heads},
      {"dim", c.encoder.dim},
      {"encoder_ffn_expansion", c.encoder.ffn_expansion},
      {"text_vocab", c.encoder.text_vocab},
      {"text_max_len", c.encoder.text_max_len},
      {"separate_branches", c.encoder.separate_branches},
      {"num_semantic_experts", c.num_semantic_experts},
      {"num_structure_experts", c.num_structure_experts},
      {"expert_expansion", c.expert_expansion},
      {"dropout", c.dropout},
      {"k_max", c.k_max},
      {"enable_tmse", c.enable_tmse},
      {"enable_csse", c.enable_csse},
      {"enable_mmfa", c.enable_mmfa},
      {"modulate_at_eval", c.modulate_at_eval},
      {"sampling", tmse::sampling_strategy_name(c.sampling)},
      {"fixed_sigma", c.fixed_sigma},
      {"top_k_fraction", c.top_k_fraction},
      {"gate_mode", c.gate_mode == ad::GateMode::kHard ? "hard" : "soft"},
      {"tmse_route", route_scope_name(c.tmse_route)},
      {"csse_route", route_scope_name(c.csse_route)},
      {"mmfa_heads", c.mmfa_heads},
      {"mmfa_ffn_expansion", c.mmfa_ffn_expansion},
      {"mmfa_pool_queries", c.mmfa_pool_queries},
      {"margin", c.margin},
      {"label_smoothing", c.label_smoothing},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.encoder.image_h = j.value("image_h", d.encoder.image_h);
  c.encoder.image_w = j.value("image_w", d.encoder.image_w);
  c.encoder.patch = j.value("patch", d.encoder.patch);
  c.encoder.depth = j.value("encoder_depth", d.encoder.depth);
  c.encoder.heads = j.value("encoder_heads", d.encoder.heads);
  c.encoder.dim = j.value("dim", d.encoder.dim);
  c.encoder.ffn_expansion = j.value("encoder_ffn_expansion", d.encoder.ffn_expansion);
  c.encoder.text_vocab = j.value("text_vocab", d.encoder.text_vocab);
  c.encoder.text_max_len = j.value("text_max_len", d.encoder.text_max_len);
  c.encoder.separate_branches = j.value("separate_branches", d.encoder.separate_branches);
  c.num_semantic_experts = j.value("num_semantic_experts", d.num_semantic_experts);
  c.num_structure_experts = j.value("num_structure_experts", d.num_structure_experts);
  c.expert_expansion = j.value("expert_expansion", d.expert_expansion);
  c.dropout = j.value("dropout", d.dropout);
  c.k_max = j.value("k_max", d.k_max);
  c.enable_tmse = j.value("enable_tmse", d.enable_tmse);
  c.enable_csse = j.value("enable_csse", d.enable_csse);
  c.enable_mmfa = j.value("enable_mmfa", d.enable_mmfa);
  c.modulate_at_eval = j.value("modulate_at_eval", d.modulate_at_eval);
  c.sampling = tmse::sampling_strategy_from_name(
      j.value("sampling", tmse::sampling_strategy_name(d.sampling)));
  c.fixed_sigma = j.value("fixed_sigma", d.fixed_sigma);
  c.top_k_fraction = j.value("top_k_fraction", d.top_k_fraction);
  c.gate_mode = j.value("gate_mode", "hard") == std::string("soft") ? ad::GateMode::kSoft
                                                                    : ad::GateMode::kHard;
  c.tmse_route = route_scope_from_name(j.value("tmse_route", route_scope_name(d.tmse_route)));
  c.csse_route = route_scope_from_name(j.value("csse_route", route_scope_name(d.csse_route)));
  c.mmfa_heads = j.value("mmfa_heads", d.mmfa_heads);
  c.mmfa_ffn_expansion = j.value("mmfa_ffn_expansion", d.mmfa_ffn_expansion);
  c.mmfa_pool_queries = j.value("mmfa_pool_queries", d.mmfa_pool_queries);
  c.margin = j.value("margin", d.margin);
  c.label_smoothing = j.value("label_smoothing", d.label_smoothing);
  c.seed = j.value("seed", d.seed);
}

std::vector<int> Batch::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

Model::Model(const ModelConfig& cfg, int num_classes) : cfg_(cfg), num_classes_(num_classes) {
  cfg_.validate();
  if (num_classes_ < 2) throw std::invalid_argument("model needs at least 2 identity classes");
  RandomStream init(mix_keys(cfg_.seed, 0x30DE1u));

  visual_encoder_ = std::make_unique<enc::VisualEncoder>(cfg_.encoder, store_, cfg_.seed);
  text_encoder_ = std::make_unique<enc::TextEncoder>(cfg_.encoder, store_, cfg_.seed);

  if (cfg_.enable_mmfa && cfg_.enable_tmse) {
    tmse::SemanticBankConfig sc;
    sc.num_experts = cfg_.num_semantic_experts;
    sc.dim = cfg_.encoder.dim;
    sc.expansion = cfg_.expert_expansion;
    sc.dropout = cfg_.dropout;
    sc.k_max = cfg_.k_max;
    sc.strategy = cfg_.sampling;
    sc.fixed_sigma = cfg_.fixed_sigma;
    sc.top_k_fraction = cfg_.top_k_fraction;
    sc.gate_mode = cfg_.gate_mode;
    sc.routes_shared_across_modalities = cfg_.tmse_route == RouteScope::kModalityShared;
    sc.sentence_seed = mix_keys(cfg_.seed, 0x5E9u);
    semantic_bank_ = std::make_unique<tmse::SemanticBank>(sc, store_, init);
  }
  if (cfg_.enable_mmfa && cfg_.enable_csse) {
    csse::StructureBankConfig cc;
    cc.num_experts = cfg_.num_structure_experts;
    cc.dim = cfg_.encoder.dim;
    cc.expansion = cfg_.expert_expansion;
    cc.dropout = cfg_.dropout;
    cc.route_modality_shared = cfg_.csse_route == RouteScope::kModalityShared;
    structure_bank_ = std::make_unique<csse::StructureBank>(cc, store_, init);
  }
  if (cfg_.enable_mmfa) {
    mmfa::AggregationBank::Config ac;
    ac.num_entries = cfg_.num_expert_entries();
    ac.dim = cfg_.encoder.dim;
    ac.heads = cfg_.mmfa_heads;
    ac.ffn_expansion = cfg_.mmfa_ffn_expansion;
    ac.pool_queries = cfg_.mmfa_pool_queries;
    aggregation_ = std::make_unique<mmfa::AggregationBank>(ac, store_, init);
  }
  classifier_ = nn::make_linear(store_, "classifier", cfg_.embedding_dim(), num_classes_, init);
}

ForwardOut Model::forward(ad::Tape& tape, const Batch& batch, bool training, long step,
                          ForwardDiagnostics* diagnostics) {
  if (batch.samples.empty()) throw std::invalid_argument("forward: empty batch");
  const bool modulated = cfg_.enable_mmfa && cfg_.enable_tmse &&
                         (training ? true : cfg_.modulate_at_eval);
  if (diagnostics) diagnostics->samples.resize(batch.samples.size());

  std::vector<ad::NodeId> embedding_rows;
  embedding_rows.reserve(batch.samples.size());
  for (std::size_t si = 0; si < batch.samples.size(); ++si) {
    const BatchSample& sample = batch.samples[si];
    RandomStream dropout_rs(
        mix_keys(cfg_.seed, mix_keys(0xD0u + static_cast<std::uint64_t>(si),
                                     static_cast<std::uint64_t>(step))));
    const enc::VisualFeatures feats = visual_encoder_->encode(tape, sample.images);

    ad::NodeId embedding = -1;
    if (!cfg_.enable_mmfa) {
      const std::array<ad::NodeId, 3> cls_cols = {feats.cls[0], feats.cls[1], feats.cls[2]};
      embedding = tape.concat_cols(cls_cols);
    } else {
      SampleDiagnostics* sd = diagnostics ? &diagnostics->samples[si] : nullptr;
      std::vector<ad::NodeId> entries;
      if (semantic_bank_) {
        auto semantic = semantic_bank_->forward(tape, feats, &sample.captions, text_encoder_.get(),
                                                training, modulated, step, dropout_rs,
                                                sd ? &sd->routes : nullptr);
        entries.insert(entries.end(), semantic.begin(), semantic.end());
      }
      const std::array<ad::NodeId, 3> tok_parts = {feats.tok[0], feats.tok[1], feats.tok[2]};
      const ad::NodeId concat_tok = tape.concat_rows(tok_parts);
      if (structure_bank_) {
        auto structure = structure_bank_->forward(tape, concat_tok, training, dropout_rs,
                                                  cfg_.encoder.num_tokens());
        entries.push_back(structure.mixed);
        if (sd) {
          sd->omega = tape.value(structure.omega);
          for (const ad::NodeId expert_out : structure.per_expert) {
            const Tensor& v = tape.value(expert_out);
            Tensor norms(v.rows(), 1);
            for (Index r = 0; r < v.rows(); ++r) {
              double s = 0.0;
              for (Index c = 0; c < v.cols(); ++c) s += v(r, c) * v(r, c);
              norms(r, 0) = std::sqrt(s);
            }
            sd->structure_norms.push_back(std::move(norms));
          }
        }
      }
      if (entries.empty()) entries.push_back(concat_tok);  // baseline features as one expert
      const ad::NodeId query = mmfa::AggregationBank::build_query(tape, feats);
      embedding = aggregation_->final_embedding(tape, query, entries,
                                                sd ? &sd->attention : nullptr);
    }
    embedding_rows.push_back(embedding);
  }

  ForwardOut out;
  out.embeddings = tape.concat_rows(embedding_rows);
  out.logits = nn::linear(tape, classifier_, out.embeddings);
  return out;
}

Tensor Model::embed(const BatchSample& sample) {
  ad::Tape tape;
  Batch batch;
  batch.samples.push_back(sample);
  const ForwardOut out = forward(tape, batch, /*training=*/false, /*step=*/0);
  return tape.value(out.embeddings);
}

}  // namespace moereid
