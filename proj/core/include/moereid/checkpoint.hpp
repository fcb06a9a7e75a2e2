#pragma once

#include "moereid/autodiff.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace moereid {

// Single JSON archive: named parameter arrays plus a free-form metadata echo
// (model config, training provenance). Doubles round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& meta);

// Loads values into matching names; throws on unknown/missing names or shape
// mismatches. Returns the stored metadata.
nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore& store);

// Metadata only, without touching parameters.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace moereid
