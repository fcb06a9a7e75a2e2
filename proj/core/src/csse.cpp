#include "moereid/csse.hpp"

#include <stdexcept>

namespace moereid::csse {

StructureBank::StructureBank(const StructureBankConfig& cfg, ParamStore& store, RandomStream& init)
    : cfg_(cfg) {
  if (cfg_.num_experts < 1) throw std::invalid_argument("structure bank needs at least one expert");
  for (int e = 0; e < cfg_.num_experts; ++e)
    experts_.push_back(
        tmse::make_expert(store, "csse.expert" + std::to_string(e), cfg_.dim, cfg_.expansion, init));
  route_fc_ = nn::make_linear(store, "csse.route", cfg_.dim, cfg_.num_experts, init);
}

ad::NodeId StructureBank::route_omega(ad::Tape& tape, ad::NodeId tok) const {
  return tape.softmax_rows(tape.mean_rows(nn::linear(tape, route_fc_, tok)));
}

StructureBank::Out StructureBank::forward(ad::Tape& tape, ad::NodeId concat_tok, bool training,
                                          RandomStream& dropout_rs, Index tokens_per_modality) const {
  Out out;
  out.per_expert.reserve(static_cast<std::size_t>(cfg_.num_experts));
  for (int e = 0; e < cfg_.num_experts; ++e)
    out.per_expert.push_back(tmse::expert_forward(tape, experts_[static_cast<std::size_t>(e)],
                                                  concat_tok, cfg_.dropout, training, dropout_rs));

  if (cfg_.route_modality_shared) {
    out.omega = route_omega(tape, concat_tok);
    ad::NodeId mixed = -1;
    for (int e = 0; e < cfg_.num_experts; ++e) {
      const ad::NodeId weight = tape.slice_cols(out.omega, e, 1);
      const ad::NodeId term = tape.scale_by_scalar(out.per_expert[static_cast<std::size_t>(e)], weight);
      mixed = e == 0 ? term : tape.add(mixed, term);
    }
    out.mixed = mixed;
    return out;
  }

  // Per-modality routing: each modality block carries its own mixture weights.
  const Index total = tape.value(concat_tok).rows();
  if (tokens_per_modality <= 0 || total % tokens_per_modality != 0 || total / tokens_per_modality != 3)
    throw std::invalid_argument("structure bank: concatenated sequence is not 3 modality blocks");
  std::vector<ad::NodeId> omega_rows;
  std::vector<ad::NodeId> mixed_blocks;
  for (int m = 0; m < 3; ++m) {
    const ad::NodeId block = tape.slice_rows(concat_tok, m * tokens_per_modality, tokens_per_modality);
    const ad::NodeId omega_m = route_omega(tape, block);
    omega_rows.push_back(omega_m);
    ad::NodeId mixed_m = -1;
    for (int e = 0; e < cfg_.num_experts; ++e) {
      const ad::NodeId expert_block = tape.slice_rows(out.per_expert[static_cast<std::size_t>(e)],
                                                      m * tokens_per_modality, tokens_per_modality);
      const ad::NodeId term = tape.scale_by_scalar(expert_block, tape.slice_cols(omega_m, e, 1));
      mixed_m = e == 0 ? term : tape.add(mixed_m, term);
    }
    mixed_blocks.push_back(mixed_m);
  }
  out.omega = tape.concat_rows(omega_rows);
  out.mixed = tape.concat_rows(mixed_blocks);
  return out;
}

}  // namespace moereid::csse
