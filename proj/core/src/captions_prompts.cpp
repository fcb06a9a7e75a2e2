#include "moereid/captions.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace moereid::captions {

namespace {

const char* modality_phrase(data::Modality m) {
  switch (m) {
    case data::Modality::kRgb: return "visible-light (RGB)";
    case data::Modality::kNir: return "near-infrared (NIR)";
    case data::Modality::kTir: return "thermal-infrared (TIR)";
  }
  return "?";
}

const char* subject_noun(data::ObjectType t) {
  return t == data::ObjectType::kPerson ? "person" : "vehicle";
}

}  // namespace

std::string build_attribute_prompt(const AttributeSchema& schema, data::Modality modality) {
  std::ostringstream out;
  out << "You are given a " << modality_phrase(modality) << " surveillance crop of a "
      << subject_noun(schema.object_type) << ".\n";
  out << "Report the following attributes of the " << subject_noun(schema.object_type)
      << " and of the scene. For each one, give a short value and a confidence score "
         "between 0 and 1 reflecting how certain you are given this spectral band.\n";
  out << "Attributes to report:\n";
  for (const auto& name : schema.all()) out << "- `" << name << "`\n";
  out << "Answer with a single JSON object, one key per attribute listed above, each value "
         "an object with fields \"value\" and \"confidence\". Use \"unknown\" with a low "
         "confidence when the band does not show it. Example shape:\n";
  out << "{\"<attribute>\": {\"value\": \"<short description>\", \"confidence\": 0.8}}\n";
  out << "Output only the JSON object.";
  return out.str();
}

std::string build_caption_prompt(const AttributeSchema& schema, data::Modality modality,
                                 const AttributeList& attrs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& a : attrs) j[a.name] = a.value;
  std::ostringstream out;
  out << "Compose a natural-language description of a " << subject_noun(schema.object_type)
      << " seen in a " << modality_phrase(modality) << " image, using the structured attributes "
      << "below. Describe appearance first and the scene conditions last. Skip attributes whose "
         "value is \"unknown\" or \"unclear\". Write plain sentences, no lists.\n";
  out << "Attributes: " << j.dump() << "\n";
  out << "Output only the description.";
  return out.str();
}

}  // namespace moereid::captions
