#pragma once

#include "moereid/image.hpp"
#include "moereid/nn.hpp"

#include <array>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace moereid::enc {

struct EncoderConfig {
  int image_h = 32;
  int image_w = 16;
  int patch = 8;
  int depth = 2;
  int heads = 4;
  Index dim = 64;
  int ffn_expansion = 2;
  int text_vocab = 4096;
  int text_max_len = 32;
  bool separate_branches = false;
  bool freeze_text = true;  // the text tower never trains
  double ln_eps = 1e-5;

  int grid_h() const { return image_h / patch; }
  int grid_w() const { return image_w / patch; }
  Index num_tokens() const { return static_cast<Index>(grid_h()) * grid_w(); }
  void validate() const;
};

// Per-modality [class row; token rows] living on a tape.
struct VisualFeatures {
  std::array<ad::NodeId, 3> cls{};  // 1xD
  std::array<ad::NodeId, 3> tok{};  // NxD
  int grid_h = 0;
  int grid_w = 0;
  Index dim = 0;
};

class VisualEncoder {
 public:
  VisualEncoder(const EncoderConfig& cfg, ParamStore& store, std::uint64_t init_seed);

  VisualFeatures encode(ad::Tape& tape, const std::array<Image, 3>& images) const;

  // N x (3*patch*patch) rows of pixel values scaled to [0,1].
  static Tensor patchify(const Image& img, int patch);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    nn::LayerNormParams ln1;
    nn::Attention attn;
    nn::LayerNormParams ln2;
    nn::Mlp ffn;
  };
  struct Branch {
    nn::Linear patch_embed;
    Param* cls_token = nullptr;   // 1xD
    Param* pos_embed = nullptr;   // (1+N)xD
    std::vector<Layer> layers;
    nn::LayerNormParams final_ln;
  };

  Branch make_branch(const std::string& prefix, ParamStore& store, RandomStream& rs) const;

  EncoderConfig cfg_;
  std::vector<Branch> branches_;           // one shared trunk, or three
  std::array<Param*, 3> modality_embed_{};  // 1xD each, added to patch tokens
};

struct TextFeatures {
  Tensor cls;  // 1xD
  Tensor tok;  // LxD
};

// Frozen deterministic text tower: hashed token embeddings, one transformer
// layer, final norm. Same string, same vectors, always.
class TextEncoder {
 public:
  TextEncoder(const EncoderConfig& cfg, ParamStore& store, std::uint64_t init_seed);

  TextFeatures encode(const std::string& text) const;
  const TextFeatures& encode_cached(const std::string& text) const;

  static std::vector<std::uint32_t> token_ids(const std::string& text, int vocab);

 private:
  EncoderConfig cfg_;
  Param* embed_ = nullptr;      // vocab x D
  Param* cls_ = nullptr;        // 1xD
  Param* pos_ = nullptr;        // (1+max_len) x D
  nn::LayerNormParams ln1_, ln2_, final_ln_;
  nn::Attention attn_;
  nn::Mlp ffn_;
  mutable std::unordered_map<std::string, TextFeatures> cache_;
  mutable std::mutex cache_mu_;
};

}  // namespace moereid::enc
