#include "moereid/captions.hpp"

#include <algorithm>

namespace moereid::captions {

std::vector<std::string> AttributeSchema::all() const {
  std::vector<std::string> out = appearance;
  out.insert(out.end(), environment.begin(), environment.end());
  return out;
}

bool AttributeSchema::is_environment(const std::string& name) const {
  return std::find(environment.begin(), environment.end(), name) != environment.end();
}

AttributeSchema AttributeSchema::person() {
  AttributeSchema s;
  s.object_type = data::ObjectType::kPerson;
  s.appearance = {"age",       "gender",   "upper clothing", "lower clothing",
                  "hairstyle", "footwear", "carrying"};
  s.environment = {"view", "illumination", "capture time", "target clarity"};
  return s;
}

AttributeSchema AttributeSchema::vehicle() {
  AttributeSchema s;
  s.object_type = data::ObjectType::kVehicle;
  s.appearance = {"vehicle type", "vehicle color", "wheel style", "roof cargo"};
  s.environment = {"view", "illumination", "capture time", "target clarity"};
  return s;
}

AttributeSchema AttributeSchema::for_type(data::ObjectType t) {
  return t == data::ObjectType::kPerson ? person() : vehicle();
}

bool ComplementConfig::is_low(const std::string& value) const {
  return std::find(low_markers.begin(), low_markers.end(), value) != low_markers.end();
}

}  // namespace moereid::captions
