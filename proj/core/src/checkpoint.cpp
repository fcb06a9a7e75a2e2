#include "moereid/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace moereid {

namespace {
constexpr int kFormatVersion = 1;
}

void save_checkpoint(const fs::path& path, const ParamStore& store, const nlohmann::json& meta) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["meta"] = meta;
  nlohmann::json params = nlohmann::json::object();
  for (const Param* p : store.all()) {
    nlohmann::json entry;
    entry["rows"] = p->value.rows();
    entry["cols"] = p->value.cols();
    entry["trainable"] = p->trainable;
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    entry["data"] = data;
    params[p->name] = std::move(entry);
  }
  j["params"] = std::move(params);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    out << j.dump();
  }
  fs::rename(tmp, path);
}

nlohmann::json load_checkpoint(const fs::path& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format in " + path.string());
  const nlohmann::json& params = j.at("params");
  for (Param* p : store.all()) {
    if (!params.contains(p->name))
      throw std::runtime_error("checkpoint misses parameter: " + p->name);
    const nlohmann::json& entry = params[p->name];
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != p->value.size())
      throw std::runtime_error("checkpoint size mismatch for " + p->name);
    for (Index i = 0; i < p->value.size(); ++i) p->value.at_flat(i) = data[static_cast<std::size_t>(i)];
  }
  return j.at("meta");
}

nlohmann::json read_checkpoint_meta(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::json j;
  in >> j;
  return j.at("meta");
}

}  // namespace moereid
