#include "moereid/data.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace moereid::data {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw std::invalid_argument("unknown split: " + s);
}

const char* object_type_name(ObjectType t) {
  return t == ObjectType::kPerson ? "person" : "vehicle";
}

ObjectType object_type_from_name(const std::string& s) {
  if (s == "person") return ObjectType::kPerson;
  if (s == "vehicle") return ObjectType::kVehicle;
  throw std::invalid_argument("unknown object type: " + s);
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::size_t b = current.find_first_not_of(" \t\n\r");
    if (b == std::string::npos) {
      current.clear();
      return;
    }
    std::size_t e = current.find_last_not_of(" \t\n\r");
    out.push_back(current.substr(b, e - b + 1));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    current.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      const bool at_end = i + 1 >= text.size();
      const bool ws_next = !at_end && std::isspace(static_cast<unsigned char>(text[i + 1]));
      if (at_end || ws_next) flush();
    }
  }
  flush();
  return out;
}

CaptionRecord make_caption_record(std::string text) {
  CaptionRecord rec;
  rec.sentences = split_sentences(text);
  rec.text = std::move(text);
  return rec;
}

std::vector<std::size_t> DatasetIndex::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

int DatasetIndex::num_identities() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.identity);
  return static_cast<int>(ids.size());
}

int DatasetIndex::num_cameras() const {
  std::set<int> cams;
  for (const auto& s : samples) cams.insert(s.camera);
  return static_cast<int>(cams.size());
}

int DatasetIndex::num_train_identities() const {
  std::set<int> ids;
  for (const auto& s : samples)
    if (s.split == Split::kTrain) ids.insert(s.identity);
  return static_cast<int>(ids.size());
}

}  // namespace moereid::data
