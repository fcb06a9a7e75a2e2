#include "moereid/data.hpp"
#include "moereid/rng.hpp"

#include <stdexcept>

namespace moereid::data {

namespace {

Image hflip(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image pad_crop(const Image& img, int pad, int off_y, int off_x, int crop_h, int crop_w) {
  Image out(crop_h, crop_w);
  for (int y = 0; y < crop_h; ++y)
    for (int x = 0; x < crop_w; ++x) {
      const int sy = y + off_y - pad;
      const int sx = x + off_x - pad;
      if (sy >= 0 && sy < img.height && sx >= 0 && sx < img.width)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
      // else stays zero padding
    }
  return out;
}

void erase_rect(Image& img, RandomStream& rs) {
  // Random rectangle covering 10-30% of the area, filled with noise.
  const int h = img.height;
  const int w = img.width;
  const int eh = std::max(1, static_cast<int>(h * (0.2 + 0.2 * rs.uniform())));
  const int ew = std::max(1, static_cast<int>(w * (0.2 + 0.2 * rs.uniform())));
  const int y0 = static_cast<int>(rs.uniform_int(std::max(1, h - eh)));
  const int x0 = static_cast<int>(rs.uniform_int(std::max(1, w - ew)));
  for (int y = y0; y < std::min(h, y0 + eh); ++y)
    for (int x = x0; x < std::min(w, x0 + ew); ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>(rs.uniform_int(256));
}

}  // namespace

void AugmentationConfig::validate(int image_h, int image_w) const {
  if (flip_prob < 0.0 || flip_prob > 1.0) throw std::invalid_argument("flip_prob outside [0,1]");
  if (erase_prob < 0.0 || erase_prob > 1.0) throw std::invalid_argument("erase_prob outside [0,1]");
  if (pad_pixels < 0) throw std::invalid_argument("pad_pixels must be >= 0");
  const int ch = crop_h > 0 ? crop_h : image_h;
  const int cw = crop_w > 0 ? crop_w : image_w;
  if (ch > image_h + 2 * pad_pixels || cw > image_w + 2 * pad_pixels)
    throw std::invalid_argument("crop size exceeds padded image size");
}

MultiModalSample augment(const MultiModalSample& sample, const AugmentationConfig& cfg,
                         std::uint64_t draw_key) {
  cfg.validate(sample.images[0].height, sample.images[0].width);
  MultiModalSample out = sample;
  RandomStream geo(mix_keys(cfg.seed, mix_keys(0xA06u, draw_key)));

  const int h = sample.images[0].height;
  const int w = sample.images[0].width;
  const int crop_h = cfg.crop_h > 0 ? cfg.crop_h : h;
  const int crop_w = cfg.crop_w > 0 ? cfg.crop_w : w;

  // One geometric draw shared by all modalities keeps them aligned.
  const bool flip = geo.bernoulli(cfg.flip_prob);
  int off_y = 0;
  int off_x = 0;
  const bool needs_crop = cfg.pad_pixels > 0 || crop_h != h || crop_w != w;
  if (needs_crop) {
    const int range_y = h + 2 * cfg.pad_pixels - crop_h + 1;
    const int range_x = w + 2 * cfg.pad_pixels - crop_w + 1;
    off_y = static_cast<int>(geo.uniform_int(range_y));
    off_x = static_cast<int>(geo.uniform_int(range_x));
  }

  for (int m = 0; m < kNumModalities; ++m) {
    Image img = sample.images[m];
    if (flip) img = hflip(img);
    if (needs_crop) img = pad_crop(img, cfg.pad_pixels, off_y, off_x, crop_h, crop_w);
    RandomStream erase_rs(mix_keys(cfg.seed, mix_keys(0xE5A5Eu + static_cast<std::uint64_t>(m), draw_key)));
    if (cfg.erase_prob > 0.0 && erase_rs.bernoulli(cfg.erase_prob)) erase_rect(img, erase_rs);
    out.images[m] = std::move(img);
  }
  return out;
}

}  // namespace moereid::data
