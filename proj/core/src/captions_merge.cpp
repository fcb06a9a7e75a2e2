#include "moereid/captions.hpp"

#include <stdexcept>

namespace moereid::captions {

namespace {

const ConfidenceAttribute* find_attr(const AttributeList& attrs, const std::string& name) {
  for (const auto& a : attrs)
    if (a.name == name) return &a;
  return nullptr;
}

}  // namespace

AttributeList merge_backends(const std::vector<std::pair<std::string, AttributeList>>& per_backend,
                             const AttributeSchema& schema) {
  if (per_backend.empty()) throw std::invalid_argument("merge_backends: no backends");
  AttributeList merged;
  for (const auto& name : schema.all()) {
    ConfidenceAttribute best;
    best.name = name;
    best.value = "unknown";
    best.confidence = 0.0;
    bool seeded = false;
    // Higher confidence wins; on a tie the earlier (higher-priority) backend
    // keeps the slot.
    for (const auto& [backend, attrs] : per_backend) {
      const ConfidenceAttribute* a = find_attr(attrs, name);
      if (!a) continue;
      if (!seeded || a->confidence > best.confidence) {
        best.value = a->value;
        best.confidence = a->confidence;
        seeded = true;
      }
    }
    best.provenance = "native";
    merged.push_back(std::move(best));
  }
  return merged;
}

ModalityAttrs complement_modalities(const ModalityAttrs& merged, const AttributeSchema& schema,
                                    const ComplementConfig& cfg) {
  ModalityAttrs out = merged;
  for (const auto& name : schema.all()) {
    if (schema.is_environment(name)) continue;  // scene facts stay modality-local
    // Snapshot of the input values for this attribute across modalities.
    std::array<const ConfidenceAttribute*, 3> in{};
    for (int m = 0; m < 3; ++m) in[m] = find_attr(merged[m], name);
    for (int m = 0; m < 3; ++m) {
      if (!in[m]) continue;
      const ConfidenceAttribute& cur = *in[m];
      const bool triggered = cfg.is_low(cur.value) || cur.confidence < cfg.threshold;
      if (!triggered) continue;
      // Best non-low donor among the other modalities; prefer higher
      // confidence, then native over borrowed, then modality order. A donor
      // must strictly beat the current confidence unless the current value is
      // itself a low marker; this keeps repeated application a fixed point.
      int donor = -1;
      for (int d = 0; d < 3; ++d) {
        if (d == m || !in[d]) continue;
        if (cfg.is_low(in[d]->value)) continue;
        if (donor == -1 || in[d]->confidence > in[donor]->confidence ||
            (in[d]->confidence == in[donor]->confidence &&
             in[donor]->provenance != "native" && in[d]->provenance == "native"))
          donor = d;
      }
      if (donor == -1) continue;  // nothing informative anywhere: keep original
      if (!cfg.is_low(cur.value) && in[donor]->confidence <= cur.confidence) continue;
      for (auto& a : out[m]) {
        if (a.name != name) continue;
        a.value = in[donor]->value;
        a.confidence = in[donor]->confidence;
        // Borrow lineage points at the modality that truly holds the value.
        if (in[donor]->provenance == "native")
          a.provenance = std::string("borrowed-from:") + data::kModalityNames[donor];
        else
          a.provenance = in[donor]->provenance;
      }
    }
  }
  return out;
}

}  // namespace moereid::captions
