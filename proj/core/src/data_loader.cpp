#include "moereid/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace moereid::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct MetaRow {
  std::string sample_id;
  int identity;
  int camera;
  int time_label;
  Split split;
};

}  // namespace

DatasetIndex load_dataset(const fs::path& root, ObjectType object_type) {
  const fs::path meta_path = root / "meta.csv";
  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("no samples found: cannot open " + meta_path.string());

  std::string header;
  if (!std::getline(meta, header)) throw std::runtime_error("no samples found: empty " + meta_path.string());
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = split_csv_line(header);
  std::map<std::string, std::size_t> col_idx;
  for (std::size_t i = 0; i < cols.size(); ++i) col_idx[cols[i]] = i;
  for (const char* required : {"sample_id", "identity", "camera", "split"})
    if (!col_idx.count(required))
      throw std::runtime_error("malformed meta.csv: missing column '" + std::string(required) + "'");
  const bool has_time = col_idx.count("time_label") > 0;

  std::vector<MetaRow> rows;
  std::string line;
  while (std::getline(meta, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < cols.size())
      throw std::runtime_error("malformed meta.csv row: " + line);
    MetaRow r;
    r.sample_id = fields[col_idx["sample_id"]];
    r.identity = std::stoi(fields[col_idx["identity"]]);
    r.camera = std::stoi(fields[col_idx["camera"]]);
    r.time_label = has_time ? std::stoi(fields[col_idx["time_label"]]) : 0;
    r.split = split_from_name(fields[col_idx["split"]]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("no samples found in " + root.string());

  DatasetIndex index;
  index.root = root;
  index.object_type = object_type;
  index.has_time_labels = has_time;
  index.samples.reserve(rows.size());

  for (const auto& r : rows) {
    MultiModalSample s;
    s.sample_id = r.sample_id;
    s.identity = r.identity;
    s.camera = r.camera;
    s.time_label = r.time_label;
    s.split = r.split;
    for (int m = 0; m < kNumModalities; ++m) {
      const fs::path img_path = root / kModalityNames[m] / (r.sample_id + ".png");
      if (!fs::exists(img_path))
        throw std::runtime_error("missing modality file for sample '" + r.sample_id + "' modality '" +
                                 kModalityNames[m] + "': " + img_path.string());
      s.images[m] = load_png(img_path);
    }
    if (!s.images[0].same_size(s.images[1]) || !s.images[0].same_size(s.images[2]))
      throw std::runtime_error("modality images disagree on size for sample '" + r.sample_id + "'");

    const fs::path cap_path = root / "captions" / (r.sample_id + ".json");
    std::ifstream cap(cap_path);
    if (!cap)
      throw std::runtime_error("missing caption sidecar: " + cap_path.string());
    nlohmann::json j;
    try {
      cap >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed caption sidecar " + cap_path.string() + ": " + e.what());
    }
    for (int m = 0; m < kNumModalities; ++m) {
      if (!j.contains(kModalityNames[m]) || !j[kModalityNames[m]].is_string())
        throw std::runtime_error("malformed caption sidecar " + cap_path.string() + ": missing key '" +
                                 kModalityNames[m] + "'");
      s.captions[m] = make_caption_record(j[kModalityNames[m]].get<std::string>());
      if (s.captions[m].sentences.empty())
        throw std::runtime_error("malformed caption sidecar " + cap_path.string() + ": empty caption for '" +
                                 std::string(kModalityNames[m]) + "'");
    }
    index.samples.push_back(std::move(s));
  }

  // Remap train identities to a contiguous 0..C-1 range (ascending original label).
  std::set<int> train_ids;
  for (const auto& s : index.samples)
    if (s.split == Split::kTrain) train_ids.insert(s.identity);
  std::map<int, int> remap;
  int next = 0;
  for (int id : train_ids) remap[id] = next++;
  for (auto& s : index.samples)
    if (s.split == Split::kTrain) s.identity = remap[s.identity];

  // Closed-set sanity: every query identity must appear in the gallery.
  std::set<int> gallery_ids, query_ids;
  for (const auto& s : index.samples) {
    if (s.split == Split::kGallery) gallery_ids.insert(s.identity);
    if (s.split == Split::kQuery) query_ids.insert(s.identity);
  }
  for (int qid : query_ids)
    if (!gallery_ids.count(qid))
      throw std::runtime_error("query identity " + std::to_string(qid) + " has no gallery sample");

  if (object_type == ObjectType::kPerson) {
    std::set<int> test_original;
    // Train labels were remapped; compare against the original labels kept in remap keys.
    for (const auto& s : index.samples)
      if (s.split != Split::kTrain) test_original.insert(s.identity);
    for (const auto& [orig, mapped] : remap)
      if (test_original.count(orig))
        throw std::runtime_error("train/test identity overlap: id " + std::to_string(orig));
  }

  return index;
}

void write_dataset(const DatasetIndex& index, const fs::path& root, bool force) {
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) throw std::runtime_error("target exists and is not empty: " + root.string());
    fs::remove_all(root);
  }
  for (const char* sub : {"rgb", "nir", "tir", "captions"}) fs::create_directories(root / sub);

  std::ofstream meta(root / "meta.csv");
  meta << "sample_id,identity,camera,time_label,split\n";
  for (const auto& s : index.samples) {
    for (int m = 0; m < kNumModalities; ++m)
      save_png(s.images[m], root / kModalityNames[m] / (s.sample_id + ".png"));
    nlohmann::json j;
    j["sample_id"] = s.sample_id;
    for (int m = 0; m < kNumModalities; ++m) j[kModalityNames[m]] = s.captions[m].text;
    std::ofstream cap(root / "captions" / (s.sample_id + ".json"));
    cap << j.dump(2) << "\n";
    meta << s.sample_id << ',' << s.identity << ',' << s.camera << ',' << s.time_label << ','
         << split_name(s.split) << "\n";
  }
}

}  // namespace moereid::data
