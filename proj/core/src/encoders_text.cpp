#include "moereid/encoders.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace moereid::enc {

std::vector<std::uint32_t> TextEncoder::token_ids(const std::string& text, int vocab) {
  std::vector<std::uint32_t> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    const std::uint64_t h = hash_string(word.data(), word.size());
    ids.push_back(static_cast<std::uint32_t>(h % static_cast<std::uint64_t>(vocab)));
    word.clear();
  };
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch)))
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    else
      flush();
  }
  flush();
  return ids;
}

TextEncoder::TextEncoder(const EncoderConfig& cfg, ParamStore& store, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  RandomStream rs(mix_keys(init_seed, 0x7E47u));
  const bool kTrainable = false;  // the text tower never updates
  embed_ = &store.add("text.embed", nn::init_normal(cfg_.text_vocab, cfg_.dim, rs, 0.05), kTrainable);
  cls_ = &store.add("text.cls", nn::init_normal(1, cfg_.dim, rs, 0.05), kTrainable);
  pos_ = &store.add("text.pos", nn::init_normal(1 + cfg_.text_max_len, cfg_.dim, rs, 0.05), kTrainable);
  ln1_ = nn::make_layer_norm(store, "text.ln1", cfg_.dim, kTrainable);
  attn_ = nn::make_attention(store, "text.attn", cfg_.dim, cfg_.heads, rs, kTrainable);
  ln2_ = nn::make_layer_norm(store, "text.ln2", cfg_.dim, kTrainable);
  ffn_ = nn::make_mlp(store, "text.ffn", cfg_.dim, cfg_.dim * cfg_.ffn_expansion, cfg_.dim, rs, kTrainable);
  final_ln_ = nn::make_layer_norm(store, "text.final_ln", cfg_.dim, kTrainable);
}

namespace {

// Plain-tensor multi-head self attention (no gradients, frozen weights).
Tensor plain_mha(const Tensor& x, const nn::Attention& p, Index dim) {
  const Index head_dim = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor q = add_row_broadcast(matmul(x, p.q.w->value), p.q.b->value);
  const Tensor k = add_row_broadcast(matmul(x, p.k.w->value), p.k.b->value);
  const Tensor v = add_row_broadcast(matmul(x, p.v.w->value), p.v.b->value);
  Tensor merged(x.rows(), dim);
  for (int h = 0; h < p.heads; ++h) {
    const Index c0 = static_cast<Index>(h) * head_dim;
    Tensor qh(x.rows(), head_dim), kh(x.rows(), head_dim), vh(x.rows(), head_dim);
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < head_dim; ++j) {
        qh(i, j) = q(i, c0 + j) * scale;
        kh(i, j) = k(i, c0 + j);
        vh(i, j) = v(i, c0 + j);
      }
    const Tensor probs = softmax_rows(matmul(qh, transpose(kh)));
    const Tensor oh = matmul(probs, vh);
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < head_dim; ++j) merged(i, c0 + j) = oh(i, j);
  }
  return add_row_broadcast(matmul(merged, p.o.w->value), p.o.b->value);
}

Tensor plain_mlp(const Tensor& x, const nn::Mlp& p) {
  Tensor h = add_row_broadcast(matmul(x, p.fc1.w->value), p.fc1.b->value);
  for (Index i = 0; i < h.size(); ++i) {
    const double v = h.at_flat(i);
    h.at_flat(i) = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
  }
  return add_row_broadcast(matmul(h, p.fc2.w->value), p.fc2.b->value);
}

}  // namespace

TextFeatures TextEncoder::encode(const std::string& text) const {
  const auto ids = token_ids(text, cfg_.text_vocab);
  if (ids.empty()) throw std::invalid_argument("empty text");
  const Index len = std::min<Index>(static_cast<Index>(ids.size()), cfg_.text_max_len);

  Tensor seq(1 + len, cfg_.dim);
  for (Index j = 0; j < cfg_.dim; ++j) seq(0, j) = cls_->value(0, j) + pos_->value(0, j);
  for (Index i = 0; i < len; ++i) {
    const auto id = static_cast<Index>(ids[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < cfg_.dim; ++j)
      seq(1 + i, j) = embed_->value(id, j) + pos_->value(1 + i, j);
  }

  const Tensor normed1 = layer_norm_rows(seq, ln1_.gain->value, ln1_.bias->value, cfg_.ln_eps);
  seq = add(seq, plain_mha(normed1, attn_, cfg_.dim));
  const Tensor normed2 = layer_norm_rows(seq, ln2_.gain->value, ln2_.bias->value, cfg_.ln_eps);
  seq = add(seq, plain_mlp(normed2, ffn_));
  seq = layer_norm_rows(seq, final_ln_.gain->value, final_ln_.bias->value, cfg_.ln_eps);

  TextFeatures out;
  out.cls = Tensor(1, cfg_.dim);
  for (Index j = 0; j < cfg_.dim; ++j) out.cls(0, j) = seq(0, j);
  out.tok = Tensor(len, cfg_.dim);
  for (Index i = 0; i < len; ++i)
    for (Index j = 0; j < cfg_.dim; ++j) out.tok(i, j) = seq(1 + i, j);
  return out;
}

const TextFeatures& TextEncoder::encode_cached(const std::string& text) const {
  std::lock_guard lock(cache_mu_);
  auto it = cache_.find(text);
  if (it != cache_.end()) return it->second;
  TextFeatures feats = encode(text);
  return cache_.emplace(text, std::move(feats)).first->second;
}

}  // namespace moereid::enc
