#include "moereid/mmfa.hpp"

#include <stdexcept>

namespace moereid::mmfa {

AggregationBank::AggregationBank(const Config& cfg, ParamStore& store, RandomStream& init)
    : cfg_(cfg) {
  if (cfg_.num_entries < 1) throw std::invalid_argument("aggregation bank needs at least one entry");
  for (int e = 0; e < cfg_.num_entries; ++e) {
    const std::string prefix = "mmfa.head" + std::to_string(e);
    HeadParams h;
    h.attn = nn::make_attention(store, prefix + ".attn", cfg_.dim, cfg_.heads, init);
    h.ln = nn::make_layer_norm(store, prefix + ".ln", cfg_.dim);
    h.ffn = nn::make_mlp(store, prefix + ".ffn", cfg_.dim, cfg_.dim * cfg_.ffn_expansion, cfg_.dim, init);
    heads_.push_back(h);
  }
}

ad::NodeId AggregationBank::build_query(ad::Tape& tape, const enc::VisualFeatures& feats) {
  const std::array<ad::NodeId, 3> rows = {feats.cls[0], feats.cls[1], feats.cls[2]};
  return tape.concat_rows(rows);
}

ad::NodeId AggregationBank::aggregate(ad::Tape& tape, int entry_index, ad::NodeId query,
                                      ad::NodeId features, std::vector<Tensor>* attn_probs) const {
  if (entry_index < 0 || entry_index >= cfg_.num_entries)
    throw std::out_of_range("aggregate: entry index");
  const HeadParams& h = heads_[static_cast<std::size_t>(entry_index)];
  const ad::NodeId attended = nn::multihead_attention(tape, h.attn, query, features, attn_probs);
  const ad::NodeId normed = nn::layer_norm(tape, h.ln, attended);
  const ad::NodeId refined = nn::mlp(tape, h.ffn, normed);  // 3xD
  if (cfg_.pool_queries) return tape.mean_rows(refined);
  return tape.reshape(refined, 1, 3 * cfg_.dim);
}

ad::NodeId AggregationBank::final_embedding(ad::Tape& tape, ad::NodeId query,
                                            std::span<const ad::NodeId> entries,
                                            std::vector<std::vector<Tensor>>* attn_probs) const {
  if (static_cast<int>(entries.size()) != cfg_.num_entries)
    throw std::invalid_argument("final_embedding: expected " + std::to_string(cfg_.num_entries) +
                                " expert entries, got " + std::to_string(entries.size()));
  std::vector<ad::NodeId> parts;
  parts.reserve(entries.size());
  for (int e = 0; e < cfg_.num_entries; ++e) {
    std::vector<Tensor> probs;
    parts.push_back(aggregate(tape, e, query, entries[static_cast<std::size_t>(e)],
                              attn_probs ? &probs : nullptr));
    if (attn_probs) attn_probs->push_back(std::move(probs));
  }
  return tape.concat_cols(parts);
}

}  // namespace moereid::mmfa
