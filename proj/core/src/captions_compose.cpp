#include "moereid/captions.hpp"

#include <sstream>
#include <stdexcept>

namespace moereid::captions {

namespace {

const ConfidenceAttribute* find_attr(const AttributeList& attrs, const std::string& name) {
  for (const auto& a : attrs)
    if (a.name == name) return &a;
  return nullptr;
}

std::string person_sentence(const std::string& name, const std::string& value) {
  if (name == "age") return "The person looks " + value + ".";
  if (name == "gender") return "The person appears to be a " + value + ".";
  if (name == "upper clothing") return "The upper clothing is a " + value + ".";
  if (name == "lower clothing") return "The lower clothing is " + value + ".";
  if (name == "hairstyle") return "The hairstyle is " + value + ".";
  if (name == "footwear") return "The footwear is " + value + ".";
  if (name == "carrying") return "The person is carrying a " + value + ".";
  return "The " + name + " is " + value + ".";
}

std::string vehicle_sentence(const std::string& name, const std::string& value) {
  if (name == "vehicle type") return "The vehicle is a " + value + ".";
  if (name == "vehicle color") return "The vehicle color is " + value + ".";
  if (name == "wheel style") return "The wheels are " + value + ".";
  if (name == "roof cargo") return "On the roof there is a " + value + ".";
  return "The " + name + " is " + value + ".";
}

std::string environment_sentence(const std::string& name, const std::string& value) {
  if (name == "view") return "The camera shows a " + value + ".";
  if (name == "illumination") return "The illumination is " + value + ".";
  if (name == "capture time") return "The capture time is " + value + ".";
  if (name == "target clarity") return "The target clarity is " + value + ".";
  return "The " + name + " is " + value + ".";
}

}  // namespace

std::string compose_caption_template(const AttributeList& attrs, const AttributeSchema& schema,
                                     const ComplementConfig& cfg) {
  for (const auto& name : schema.all())
    if (!find_attr(attrs, name))
      throw std::invalid_argument("attribute set does not cover schema: missing " + name);
  std::ostringstream out;
  bool first = true;
  auto emit = [&](const std::string& sentence) {
    if (!first) out << ' ';
    out << sentence;
    first = false;
  };
  for (const auto& name : schema.appearance) {
    const ConfidenceAttribute* a = find_attr(attrs, name);
    if (cfg.is_low(a->value)) continue;  // nothing informative to say
    emit(schema.object_type == data::ObjectType::kPerson ? person_sentence(name, a->value)
                                                         : vehicle_sentence(name, a->value));
  }
  for (const auto& name : schema.environment) {
    const ConfidenceAttribute* a = find_attr(attrs, name);
    emit(environment_sentence(name, a->value));
  }
  return out.str();
}

}  // namespace moereid::captions
