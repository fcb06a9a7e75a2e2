#include "moereid/captions.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

namespace moereid::captions {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double confidence_from(const nlohmann::json& j) {
  if (j.is_number()) return clamp01(j.get<double>());
  if (j.is_string()) {
    try {
      return clamp01(std::stod(j.get<std::string>()));
    } catch (...) {
      return 0.0;
    }
  }
  return 0.0;
}

}  // namespace

AttributeList parse_attribute_response(const std::string& raw, const AttributeSchema& schema) {
  // Backends wrap JSON in prose or code fences; recover the outermost object.
  const std::size_t b = raw.find('{');
  const std::size_t e = raw.rfind('}');
  nlohmann::json j;
  if (b != std::string::npos && e != std::string::npos && e > b) {
    try {
      j = nlohmann::json::parse(raw.substr(b, e - b + 1));
    } catch (const std::exception&) {
      j = nullptr;
    }
  }
  if (!j.is_object())
    throw std::runtime_error("unparseable attribute response: " + raw);

  AttributeList out;
  out.reserve(schema.all().size());
  for (const auto& name : schema.all()) {
    ConfidenceAttribute a;
    a.name = name;
    a.value = "unknown";
    a.confidence = 0.0;
    if (j.contains(name)) {
      const nlohmann::json& entry = j[name];
      if (entry.is_object()) {
        if (entry.contains("value") && entry["value"].is_string() &&
            !entry["value"].get<std::string>().empty())
          a.value = entry["value"].get<std::string>();
        if (entry.contains("confidence")) a.confidence = confidence_from(entry["confidence"]);
      } else if (entry.is_string() && !entry.get<std::string>().empty()) {
        a.value = entry.get<std::string>();
        a.confidence = 0.0;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace moereid::captions
