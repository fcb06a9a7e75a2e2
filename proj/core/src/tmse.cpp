#include "moereid/tmse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace moereid::tmse {

const char* sampling_strategy_name(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kDynamic: return "dynamic";
    case SamplingStrategy::kAllToken: return "all_token";
    case SamplingStrategy::kTopK: return "top_k";
    case SamplingStrategy::kFixedSigma: return "fixed_sigma";
  }
  return "?";
}

SamplingStrategy sampling_strategy_from_name(const std::string& s) {
  if (s == "dynamic") return SamplingStrategy::kDynamic;
  if (s == "all_token") return SamplingStrategy::kAllToken;
  if (s == "top_k") return SamplingStrategy::kTopK;
  if (s == "fixed_sigma") return SamplingStrategy::kFixedSigma;
  throw std::invalid_argument("unknown sampling strategy: " + s);
}

ExpertParams make_expert(ParamStore& store, const std::string& name, Index dim, int expansion,
                         RandomStream& rs) {
  ExpertParams p;
  p.ln = nn::make_layer_norm(store, name + ".ln", dim);
  p.mlp = nn::make_mlp(store, name + ".mlp", dim, dim * expansion, dim, rs);
  return p;
}

ad::NodeId expert_forward(ad::Tape& tape, const ExpertParams& p, ad::NodeId x, double dropout_rate,
                          bool training, RandomStream& dropout_rs) {
  const ad::NodeId inner = nn::mlp(tape, p.mlp, nn::layer_norm(tape, p.ln, x));
  return tape.add(tape.dropout(inner, dropout_rate, dropout_rs, training), x);
}

RouteParams make_route(ParamStore& store, const std::string& name, Index dim, Index hidden,
                       RandomStream& rs) {
  RouteParams p;
  p.tok_fc1 = nn::make_linear(store, name + ".tok_fc1", dim, hidden, rs);
  p.tok_fc2 = nn::make_linear(store, name + ".tok_fc2", hidden, 1, rs);
  p.cls_fc1 = nn::make_linear(store, name + ".cls_fc1", dim, hidden, rs);
  p.cls_fc2 = nn::make_linear(store, name + ".cls_fc2", hidden, 1, rs);
  return p;
}

RouteMaps route_maps(ad::Tape& tape, const RouteParams& p, ad::NodeId tok, ad::NodeId cls,
                     int grid_h, int grid_w) {
  const Index n = tape.value(tok).rows();
  if (n != static_cast<Index>(grid_h) * grid_w)
    throw std::invalid_argument("route_maps: token count does not match the grid");
  RouteMaps out;
  out.alpha = nn::linear(tape, p.tok_fc2, tape.relu(nn::linear(tape, p.tok_fc1, tok)));
  out.sigma = nn::linear(tape, p.cls_fc2, tape.relu(nn::linear(tape, p.cls_fc1, cls)));
  return out;
}

ModulationParams make_modulation(ParamStore& store, const std::string& name) {
  ModulationParams p;
  p.w_alpha = &store.add(name + ".w_alpha", Tensor::scalar(0.0), true);
  p.w_beta = &store.add(name + ".w_beta", Tensor::scalar(0.0), true);
  p.bias = &store.add(name + ".bias", Tensor::scalar(0.0), true);
  return p;
}

ad::NodeId modulate(ad::Tape& tape, const ModulationParams& p, ad::NodeId alpha, ad::NodeId beta) {
  if (!tape.value(alpha).same_shape(tape.value(beta)))
    throw std::invalid_argument("modulate: alpha and beta shapes differ");
  const ad::NodeId wa = tape.scale_by_scalar(alpha, tape.param(*p.w_alpha));
  const ad::NodeId wb = tape.scale_by_scalar(beta, tape.param(*p.w_beta));
  const ad::NodeId biased =
      tape.add(tape.add(wa, wb),
               tape.scale_by_scalar(tape.constant(Tensor::ones(tape.value(alpha).rows(),
                                                               tape.value(alpha).cols())),
                                    tape.param(*p.bias)));
  return tape.add(tape.tanh_fn(biased), alpha);
}

std::string sample_sentences(const data::CaptionRecord& caption, int k_max, std::uint64_t seed,
                             int expert_index, long step, int modality_index) {
  const auto n = static_cast<std::int64_t>(caption.sentences.size());
  if (n < 1) throw std::invalid_argument("sample_sentences: caption has no sentences");
  std::uint64_t key = mix_keys(seed, 0x5E47u);
  key = mix_keys(key, static_cast<std::uint64_t>(expert_index));
  key = mix_keys(key, static_cast<std::uint64_t>(step));
  key = mix_keys(key, static_cast<std::uint64_t>(modality_index));
  key = mix_keys(key, hash_string(caption.text.data(), caption.text.size()));
  RandomStream rs(key);
  const std::int64_t k_hi = std::min<std::int64_t>(n, std::max(1, k_max));
  const std::int64_t k = 1 + rs.uniform_int(k_hi);
  const auto chosen = rs.sample_without_replacement(n, k);  // ascending: original order
  std::ostringstream joined;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (i) joined << ' ';
    joined << caption.sentences[static_cast<std::size_t>(chosen[i])];
  }
  return joined.str();
}

double RouteState::mask_density() const {
  if (mask.size() == 0) return 0.0;
  return mask.sum() / static_cast<double>(mask.size());
}

SemanticBank::SemanticBank(const SemanticBankConfig& cfg, ParamStore& store, RandomStream& init)
    : cfg_(cfg) {
  if (cfg_.num_experts < 1) throw std::invalid_argument("semantic bank needs at least one expert");
  const Index hidden = std::max<Index>(1, cfg_.dim / 2);
  for (int e = 0; e < cfg_.num_experts; ++e) {
    const std::string prefix = "tmse.expert" + std::to_string(e);
    experts_.push_back(make_expert(store, prefix, cfg_.dim, cfg_.expansion, init));
    if (cfg_.routes_shared_across_modalities) {
      const RouteParams shared = make_route(store, prefix + ".route", cfg_.dim, hidden, init);
      for (int m = 0; m < 3; ++m) routes_.push_back(shared);
    } else {
      for (int m = 0; m < 3; ++m)
        routes_.push_back(make_route(store, prefix + ".route." + data::kModalityNames[m], cfg_.dim,
                                     hidden, init));
    }
    for (int m = 0; m < 3; ++m)
      modnets_.push_back(make_modulation(store, prefix + ".mod." + data::kModalityNames[m]));
  }
}

std::vector<ad::NodeId> SemanticBank::forward(ad::Tape& tape, const enc::VisualFeatures& feats,
                                              const std::array<data::CaptionRecord, 3>* captions,
                                              const enc::TextEncoder* text_encoder, bool training,
                                              bool modulated, long step, RandomStream& dropout_rs,
                                              std::vector<std::array<RouteState, 3>>* diagnostics) const {
  if (modulated && (!captions || !text_encoder))
    throw std::invalid_argument("semantic bank: modulated mode requires captions and a text encoder");
  const Index n = tape.value(feats.tok[0]).rows();
  std::vector<ad::NodeId> outputs;
  outputs.reserve(static_cast<std::size_t>(cfg_.num_experts));
  if (diagnostics) diagnostics->resize(static_cast<std::size_t>(cfg_.num_experts));

  for (int e = 0; e < cfg_.num_experts; ++e) {
    std::array<ad::NodeId, 3> masked{};
    for (int m = 0; m < 3; ++m) {
      const ad::NodeId transformed =
          expert_forward(tape, experts_[static_cast<std::size_t>(e)], feats.tok[static_cast<std::size_t>(m)],
                         cfg_.dropout, training, dropout_rs);
      const RouteMaps maps = route_maps(tape, route(e, m), feats.tok[static_cast<std::size_t>(m)],
                                        feats.cls[static_cast<std::size_t>(m)], feats.grid_h,
                                        feats.grid_w);
      ad::NodeId map = maps.alpha;
      ad::NodeId beta = -1;
      ad::NodeId gamma = -1;
      if (modulated) {
        const std::string text =
            training ? sample_sentences((*captions)[static_cast<std::size_t>(m)], cfg_.k_max,
                                        cfg_.sentence_seed, e, step, m)
                     : (*captions)[static_cast<std::size_t>(m)].text;
        const enc::TextFeatures& tf = text_encoder->encode_cached(text);
        beta = tape.cosine_rows(tape.constant(tf.cls), feats.tok[static_cast<std::size_t>(m)]);
        gamma = modulate(tape, modulation(e, m), maps.alpha, beta);
        map = gamma;
      }

      ad::NodeId mask = -1;
      switch (cfg_.strategy) {
        case SamplingStrategy::kDynamic:
          mask = tape.threshold_gate(map, maps.sigma, cfg_.gate_mode);
          break;
        case SamplingStrategy::kAllToken:
          mask = tape.constant(Tensor::ones(n, 1));
          break;
        case SamplingStrategy::kTopK: {
          const Index k = std::max<Index>(
              1, static_cast<Index>(std::llround(static_cast<double>(n) * cfg_.top_k_fraction)));
          mask = tape.topk_gate(map, k);
          break;
        }
        case SamplingStrategy::kFixedSigma:
          mask = tape.threshold_gate_const(map, cfg_.fixed_sigma, cfg_.gate_mode);
          break;
      }
      masked[static_cast<std::size_t>(m)] = tape.scale_rows(transformed, mask);

      if (diagnostics) {
        RouteState& st = (*diagnostics)[static_cast<std::size_t>(e)][static_cast<std::size_t>(m)];
        st.alpha = tape.value(maps.alpha).reshaped(feats.grid_h, feats.grid_w);
        st.sigma = tape.value(maps.sigma).item();
        st.mask = tape.value(mask).reshaped(feats.grid_h, feats.grid_w);
        st.modulated = modulated;
        if (modulated) {
          st.beta = tape.value(beta).reshaped(feats.grid_h, feats.grid_w);
          st.gamma = tape.value(gamma).reshaped(feats.grid_h, feats.grid_w);
        }
      }
    }
    outputs.push_back(tape.concat_rows(masked));
  }
  return outputs;
}

}  // namespace moereid::tmse
