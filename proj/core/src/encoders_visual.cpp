#include "moereid/encoders.hpp"

#include "moereid/data.hpp"

#include <stdexcept>

namespace moereid::enc {

void EncoderConfig::validate() const {
  if (dim % heads != 0) throw std::invalid_argument("encoder dim must be divisible by heads");
  if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0)
    throw std::invalid_argument("image size must be a multiple of the patch size");
  if (depth < 1) throw std::invalid_argument("encoder depth must be >= 1");
  if (text_vocab < 2 || text_max_len < 1) throw std::invalid_argument("bad text encoder size");
  if (!freeze_text) throw std::invalid_argument("the text tower is always frozen");
}

Tensor VisualEncoder::patchify(const Image& img, int patch) {
  const int gh = img.height / patch;
  const int gw = img.width / patch;
  const Index patch_len = static_cast<Index>(patch) * patch * 3;
  Tensor out(static_cast<Index>(gh) * gw, patch_len);
  Index row = 0;
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      Index col = 0;
      for (int y = py * patch; y < (py + 1) * patch; ++y)
        for (int x = px * patch; x < (px + 1) * patch; ++x)
          for (int c = 0; c < 3; ++c) out(row, col++) = img.at(y, x, c) / 255.0;
      ++row;
    }
  return out;
}

VisualEncoder::Branch VisualEncoder::make_branch(const std::string& prefix, ParamStore& store,
                                                 RandomStream& rs) const {
  Branch b;
  const Index patch_len = static_cast<Index>(cfg_.patch) * cfg_.patch * 3;
  b.patch_embed = nn::make_linear(store, prefix + ".patch_embed", patch_len, cfg_.dim, rs);
  b.cls_token = &store.add(prefix + ".cls", nn::init_normal(1, cfg_.dim, rs, 0.02), true);
  b.pos_embed = &store.add(prefix + ".pos",
                           nn::init_normal(1 + cfg_.num_tokens(), cfg_.dim, rs, 0.02), true);
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.ln1 = nn::make_layer_norm(store, lp + ".ln1", cfg_.dim);
    layer.attn = nn::make_attention(store, lp + ".attn", cfg_.dim, cfg_.heads, rs);
    layer.ln2 = nn::make_layer_norm(store, lp + ".ln2", cfg_.dim);
    layer.ffn = nn::make_mlp(store, lp + ".ffn", cfg_.dim, cfg_.dim * cfg_.ffn_expansion, cfg_.dim, rs);
    b.layers.push_back(layer);
  }
  b.final_ln = nn::make_layer_norm(store, prefix + ".final_ln", cfg_.dim);
  return b;
}

VisualEncoder::VisualEncoder(const EncoderConfig& cfg, ParamStore& store, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  RandomStream rs(mix_keys(init_seed, 0x71505u));
  if (cfg_.separate_branches) {
    for (int m = 0; m < 3; ++m)
      branches_.push_back(make_branch(std::string("visual.") + data::kModalityNames[m], store, rs));
  } else {
    branches_.push_back(make_branch("visual.trunk", store, rs));
  }
  for (int m = 0; m < 3; ++m)
    modality_embed_[m] = &store.add(std::string("visual.modality.") + data::kModalityNames[m],
                                    nn::init_normal(1, cfg_.dim, rs, 0.02), true);
}

VisualFeatures VisualEncoder::encode(ad::Tape& tape, const std::array<Image, 3>& images) const {
  VisualFeatures out;
  out.grid_h = cfg_.grid_h();
  out.grid_w = cfg_.grid_w();
  out.dim = cfg_.dim;
  const Index n = cfg_.num_tokens();
  for (int m = 0; m < 3; ++m) {
    const Image& img = images[static_cast<std::size_t>(m)];
    if (img.height != cfg_.image_h || img.width != cfg_.image_w)
      throw std::invalid_argument("encoder got image of wrong spatial size: expected " +
                                  std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w) +
                                  ", got " + std::to_string(img.height) + "x" +
                                  std::to_string(img.width));
    const Branch& br = branches_[cfg_.separate_branches ? static_cast<std::size_t>(m) : 0];
    const ad::NodeId patches = tape.constant(patchify(img, cfg_.patch));
    ad::NodeId x = nn::linear(tape, br.patch_embed, patches);
    x = tape.add_row_broadcast(x, tape.param(*modality_embed_[m]));
    const std::array<ad::NodeId, 2> seq_parts = {tape.param(*br.cls_token), x};
    ad::NodeId seq = tape.concat_rows(seq_parts);
    seq = tape.add(seq, tape.param(*br.pos_embed));
    for (const Layer& layer : br.layers) {
      const ad::NodeId normed = nn::layer_norm(tape, layer.ln1, seq, cfg_.ln_eps);
      seq = tape.add(seq, nn::multihead_attention(tape, layer.attn, normed, normed));
      seq = tape.add(seq, nn::mlp(tape, layer.ffn, nn::layer_norm(tape, layer.ln2, seq, cfg_.ln_eps)));
    }
    seq = nn::layer_norm(tape, br.final_ln, seq, cfg_.ln_eps);
    out.cls[static_cast<std::size_t>(m)] = tape.slice_rows(seq, 0, 1);
    out.tok[static_cast<std::size_t>(m)] = tape.slice_rows(seq, 1, n);
  }
  return out;
}

}  // namespace moereid::enc
