#include "moereid/captions.hpp"
#include "moereid/data.hpp"
#include "moereid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace moereid::data {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

const std::vector<std::pair<std::string, Rgb>> kColors = {
    {"red", {200, 40, 40}},   {"blue", {40, 70, 200}},   {"green", {40, 170, 60}},
    {"yellow", {210, 200, 40}}, {"purple", {140, 50, 170}}, {"orange", {220, 130, 30}},
    {"cyan", {40, 190, 190}}, {"magenta", {200, 50, 160}},
};

const std::vector<std::string> kAges = {"young", "middle-aged", "elderly"};
const std::vector<std::string> kGenders = {"man", "woman"};
const std::vector<std::string> kUpperGarments = {"jacket", "shirt", "coat", "sweater"};
const std::vector<std::string> kLowerGarments = {"trousers", "jeans", "shorts", "skirt"};
const std::vector<std::string> kHairstyles = {"short hair", "long hair", "ponytail", "bald"};
const std::vector<std::string> kFootwear = {"sneakers", "boots", "sandals", "leather shoes"};
const std::vector<std::string> kCarrying = {"backpack", "handbag", "shoulder bag", "suitcase"};

const std::vector<std::string> kVehicleTypes = {"sedan", "suv", "van", "pickup truck", "hatchback"};
const std::vector<std::string> kWheelStyles = {"alloy wheels", "steel wheels"};
const std::vector<std::string> kRoofCargo = {"roof box", "roof rack", "ladder"};

const std::vector<std::string> kViews = {"front view", "back view", "side view", "oblique view"};
const std::vector<std::string> kIlluminations = {"bright", "dim", "dark"};
const std::vector<std::string> kCaptureTimes = {"daytime", "night"};
const std::vector<std::string> kClarities = {"clear", "moderate", "blurred"};

template <typename T>
const T& pick(const std::vector<T>& pool, RandomStream& rs) {
  return pool[static_cast<std::size_t>(rs.uniform_int(static_cast<std::int64_t>(pool.size())))];
}

void fill_rect(Image& img, int y0, int y1, int x0, int x1, Rgb c) {
  y0 = std::max(0, y0);
  x0 = std::max(0, x0);
  y1 = std::min(img.height, y1);
  x1 = std::min(img.width, x1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      img.at(y, x, 0) = c.r;
      img.at(y, x, 1) = c.g;
      img.at(y, x, 2) = c.b;
    }
}

Rgb color_by_name(const std::string& name) {
  for (const auto& [n, c] : kColors)
    if (name.rfind(n, 0) == 0) return c;
  return {128, 128, 128};
}

Image render_person(const std::map<std::string, std::string>& attrs, int h, int w, int jitter) {
  Image img(h, w);
  fill_rect(img, 0, h, 0, w, {28, 28, 32});  // background
  const int cx = w / 2 + jitter;
  const int body_w = std::max(4, w / 3);
  const int head_top = h / 10;
  const int head_bot = h / 4;
  const int torso_bot = (3 * h) / 5;
  const int legs_bot = (9 * h) / 10;

  const Rgb skin{210, 170, 140};
  const Rgb hair{60, 40, 25};
  fill_rect(img, head_top, head_bot, cx - body_w / 4, cx + body_w / 4, skin);
  if (attrs.at("hairstyle") != "bald")
    fill_rect(img, head_top - 1, head_top + 1, cx - body_w / 4, cx + body_w / 4, hair);
  if (attrs.at("hairstyle") == "long hair" || attrs.at("hairstyle") == "ponytail")
    fill_rect(img, head_top, head_bot + 2, cx + body_w / 4, cx + body_w / 4 + 1, hair);

  fill_rect(img, head_bot, torso_bot, cx - body_w / 2, cx + body_w / 2,
            color_by_name(attrs.at("upper clothing")));
  fill_rect(img, torso_bot, legs_bot, cx - body_w / 2, cx + body_w / 2,
            color_by_name(attrs.at("lower clothing")));
  fill_rect(img, legs_bot, h - 1, cx - body_w / 2, cx + body_w / 2, {70, 50, 35});

  // Carried item: warm bright block beside the torso; stands out in every band.
  const std::string& carrying = attrs.at("carrying");
  const int item_y = (head_bot + torso_bot) / 2;
  if (carrying == "backpack")
    fill_rect(img, item_y - 2, item_y + 2, cx - body_w / 2 - 3, cx - body_w / 2, {245, 245, 235});
  else if (carrying == "handbag")
    fill_rect(img, torso_bot - 3, torso_bot + 1, cx + body_w / 2, cx + body_w / 2 + 3, {240, 230, 200});
  else if (carrying == "shoulder bag")
    fill_rect(img, item_y, item_y + 4, cx + body_w / 2, cx + body_w / 2 + 2, {235, 235, 245});
  else
    fill_rect(img, legs_bot - 4, legs_bot, cx + body_w / 2 + 1, cx + body_w / 2 + 4, {250, 240, 240});
  return img;
}

Image render_vehicle(const std::map<std::string, std::string>& attrs, int h, int w, int jitter) {
  Image img(h, w);
  fill_rect(img, 0, h, 0, w, {35, 35, 38});
  const int roof = h / 4;
  const int body_top = (2 * h) / 5;
  const int body_bot = (4 * h) / 5;
  const int x0 = w / 8 + jitter;
  const int x1 = w - w / 8 + jitter;
  const Rgb body = color_by_name(attrs.at("vehicle color"));
  fill_rect(img, body_top, body_bot, x0, x1, body);
  fill_rect(img, roof, body_top, x0 + (x1 - x0) / 5, x1 - (x1 - x0) / 5, {90, 110, 130});  // cabin
  const Rgb wheel = attrs.at("wheel style") == "alloy wheels" ? Rgb{170, 170, 175} : Rgb{55, 55, 55};
  const int wheel_r = std::max(1, h / 10);
  fill_rect(img, body_bot - wheel_r, body_bot + wheel_r, x0 + 1, x0 + 1 + 2 * wheel_r, wheel);
  fill_rect(img, body_bot - wheel_r, body_bot + wheel_r, x1 - 1 - 2 * wheel_r, x1 - 1, wheel);
  // Roof cargo marker.
  const std::string& cargo = attrs.at("roof cargo");
  const Rgb cargo_color = cargo == "roof box" ? Rgb{240, 240, 230}
                          : cargo == "roof rack" ? Rgb{220, 220, 240}
                                                 : Rgb{235, 225, 210};
  fill_rect(img, roof - 2, roof, x0 + (x1 - x0) / 4, x1 - (x1 - x0) / 4, cargo_color);
  return img;
}

Image to_nir(const Image& rgb, RandomStream& rs) {
  Image out(rgb.height, rgb.width);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      const double luma =
          0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2);
      const double noisy = luma + rs.normal(0.0, 8.0);
      const auto v = static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
      out.at(y, x, 0) = v;
      out.at(y, x, 1) = v;
      out.at(y, x, 2) = v;
    }
  return out;
}

Image to_tir(const Image& rgb, int identity) {
  // Identity-specific heat palette: black -> tint -> white over luma.
  RandomStream rs(mix_keys(0x7112u, static_cast<std::uint64_t>(identity)));
  const Rgb tint{static_cast<std::uint8_t>(120 + rs.uniform_int(136)),
                 static_cast<std::uint8_t>(rs.uniform_int(160)),
                 static_cast<std::uint8_t>(rs.uniform_int(110))};
  Image out(rgb.height, rgb.width);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      const double luma =
          (0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2)) / 255.0;
      auto heat = [&](std::uint8_t tint_c) {
        if (luma < 0.5) return static_cast<std::uint8_t>(std::lround(2.0 * luma * tint_c));
        const double t = (luma - 0.5) * 2.0;
        return static_cast<std::uint8_t>(std::lround(tint_c + t * (255.0 - tint_c)));
      };
      out.at(y, x, 0) = heat(tint.r);
      out.at(y, x, 1) = heat(tint.g);
      out.at(y, x, 2) = heat(tint.b);
    }
  return out;
}

}  // namespace

SyntheticDataset generate_synthetic_with_truth(const SyntheticSpec& spec) {
  if (spec.num_ids < 2) throw std::invalid_argument("generate_synthetic: num_ids must be >= 2");
  if (spec.samples_per_id < 2)
    throw std::invalid_argument("generate_synthetic: samples_per_id must be >= 2");
  if (spec.height < 16 || spec.width < 16)
    throw std::invalid_argument("generate_synthetic: image size too small to render (min 16x16)");

  const captions::AttributeSchema schema = captions::AttributeSchema::for_type(spec.object_type);
  SyntheticDataset out;
  out.index.object_type = spec.object_type;
  out.index.has_time_labels = true;

  for (int id = 0; id < spec.num_ids; ++id) {
    RandomStream id_rs(mix_keys(spec.seed, 0x1D00u + static_cast<std::uint64_t>(id)));
    std::map<std::string, std::string> attrs;
    if (spec.object_type == ObjectType::kPerson) {
      attrs["age"] = pick(kAges, id_rs);
      attrs["gender"] = pick(kGenders, id_rs);
      attrs["upper clothing"] = pick(kColors, id_rs).first + " " + pick(kUpperGarments, id_rs);
      attrs["lower clothing"] = pick(kColors, id_rs).first + " " + pick(kLowerGarments, id_rs);
      attrs["hairstyle"] = pick(kHairstyles, id_rs);
      attrs["footwear"] = pick(kFootwear, id_rs);
      attrs["carrying"] = pick(kCarrying, id_rs);
    } else {
      attrs["vehicle type"] = pick(kVehicleTypes, id_rs);
      attrs["vehicle color"] = pick(kColors, id_rs).first;
      attrs["wheel style"] = pick(kWheelStyles, id_rs);
      attrs["roof cargo"] = pick(kRoofCargo, id_rs);
    }
    // Withhold the carried-item attribute from one modality's caption; the
    // other bands still see it, which is what the complement step recovers.
    const std::string suppressed_name =
        spec.object_type == ObjectType::kPerson ? "carrying" : "roof cargo";
    const auto suppressed_modality = static_cast<Modality>(id_rs.uniform_int(3));
    out.truth.identity_attrs.push_back(attrs);
    out.truth.suppressed.emplace_back(suppressed_name, suppressed_modality);

    for (int j = 0; j < spec.samples_per_id; ++j) {
      MultiModalSample s;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "id%03d_s%02d", id, j);
      s.sample_id = buf;
      s.identity = id;
      s.camera = j % 4;
      s.time_label = j / 2;
      s.split = Split::kTrain;

      std::map<std::string, std::string> env;
      env["view"] = kViews[static_cast<std::size_t>(s.camera) % kViews.size()];
      env["illumination"] = kIlluminations[static_cast<std::size_t>(id + j) % kIlluminations.size()];
      env["capture time"] = kCaptureTimes[static_cast<std::size_t>(s.time_label) % kCaptureTimes.size()];
      env["target clarity"] = kClarities[static_cast<std::size_t>(j) % kClarities.size()];

      RandomStream sample_rs(mix_keys(spec.seed, 0x5A3Fu + static_cast<std::uint64_t>(id) * 1000 +
                                                     static_cast<std::uint64_t>(j)));
      const int jitter = static_cast<int>(sample_rs.uniform_int(5)) - 2;
      const Image rgb = spec.object_type == ObjectType::kPerson
                            ? render_person(attrs, spec.height, spec.width, jitter)
                            : render_vehicle(attrs, spec.height, spec.width, jitter);
      s.images[0] = rgb;
      s.images[1] = to_nir(rgb, sample_rs);
      s.images[2] = to_tir(rgb, id);

      for (int m = 0; m < kNumModalities; ++m) {
        captions::AttributeList alist;
        for (const auto& name : schema.appearance) {
          captions::ConfidenceAttribute a;
          a.name = name;
          const bool suppressed = name == suppressed_name && m == static_cast<int>(suppressed_modality);
          a.value = suppressed ? "unknown" : attrs.at(name);
          a.confidence = suppressed ? 0.0 : 1.0;
          alist.push_back(std::move(a));
        }
        for (const auto& name : schema.environment)
          alist.push_back({name, env.at(name), 1.0, "native"});
        s.captions[m] =
            make_caption_record(captions::compose_caption_template(alist, schema, {}));
      }
      out.truth.environment_attrs.push_back(env);
      out.index.samples.push_back(std::move(s));
    }
  }
  return out;
}

DatasetIndex generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_with_truth(spec).index;
}

}  // namespace moereid::data
