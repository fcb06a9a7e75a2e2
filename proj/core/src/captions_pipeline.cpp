#include "moereid/captions.hpp"
#include "moereid/rng.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;

namespace moereid::captions {

namespace {

nlohmann::json attrs_to_json(const AttributeList& attrs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : attrs)
    arr.push_back({{"name", a.name},
                   {"value", a.value},
                   {"confidence", a.confidence},
                   {"provenance", a.provenance}});
  return arr;
}

AttributeList attrs_from_json(const nlohmann::json& arr) {
  AttributeList out;
  for (const auto& e : arr) {
    ConfidenceAttribute a;
    a.name = e.at("name").get<std::string>();
    a.value = e.at("value").get<std::string>();
    a.confidence = e.at("confidence").get<double>();
    a.provenance = e.value("provenance", "native");
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

void write_sidecar_atomic(const fs::path& path, const Sidecar& sc) {
  nlohmann::json j;
  j["sample_id"] = sc.sample_id;
  for (int m = 0; m < data::kNumModalities; ++m) j[data::kModalityNames[m]] = sc.captions[m];
  if (sc.has_attributes) {
    nlohmann::json attrs;
    for (int m = 0; m < data::kNumModalities; ++m)
      attrs[data::kModalityNames[m]] = attrs_to_json(sc.attributes[m]);
    j["attributes"] = attrs;
  }
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write sidecar: " + tmp.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

Sidecar read_sidecar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read sidecar: " + path.string());
  nlohmann::json j;
  in >> j;
  Sidecar sc;
  sc.sample_id = j.value("sample_id", "");
  for (int m = 0; m < data::kNumModalities; ++m)
    sc.captions[m] = j.at(data::kModalityNames[m]).get<std::string>();
  if (j.contains("attributes")) {
    sc.has_attributes = true;
    for (int m = 0; m < data::kNumModalities; ++m)
      sc.attributes[m] = attrs_from_json(j["attributes"].at(data::kModalityNames[m]));
  }
  return sc;
}

PipelineSummary run_pipeline(const data::DatasetIndex& index,
                             const std::vector<MllmClient*>& backends, MllmClient* composer_client,
                             const PipelineConfig& cfg, const fs::path& captions_dir) {
  if (backends.empty()) throw std::invalid_argument("run_pipeline: no backends configured");
  if (cfg.composer == Composer::kLlm && !composer_client)
    throw std::invalid_argument("run_pipeline: llm composer requested without a client");
  fs::create_directories(captions_dir);
  const AttributeSchema schema = AttributeSchema::for_type(index.object_type);

  PipelineSummary summary;
  std::mutex mu;
  std::atomic<std::size_t> next{0};

  auto process_one = [&](const data::MultiModalSample& sample) {
    const fs::path out_path = captions_dir / (sample.sample_id + ".json");
    if (!cfg.force && fs::exists(out_path)) {
      std::lock_guard lock(mu);
      ++summary.skipped;
      return;
    }
    ModalityAttrs merged;
    for (int m = 0; m < data::kNumModalities; ++m) {
      const std::string prompt = build_attribute_prompt(schema, static_cast<data::Modality>(m));
      std::vector<std::pair<std::string, AttributeList>> per_backend;
      for (MllmClient* client : backends) {
        const std::string raw = client->generate(prompt, &sample.images[m]);
        per_backend.emplace_back(client->backend_id(), parse_attribute_response(raw, schema));
      }
      merged[m] = merge_backends(per_backend, schema);
    }
    const ModalityAttrs complemented = complement_modalities(merged, schema, cfg.complement);

    Sidecar sc;
    sc.sample_id = sample.sample_id;
    sc.has_attributes = true;
    sc.attributes = complemented;
    for (int m = 0; m < data::kNumModalities; ++m) {
      if (cfg.composer == Composer::kTemplate) {
        sc.captions[m] = compose_caption_template(complemented[m], schema, cfg.complement);
      } else {
        const std::string prompt =
            build_caption_prompt(schema, static_cast<data::Modality>(m), complemented[m]);
        sc.captions[m] = composer_client->generate(prompt, nullptr);
      }
    }
    write_sidecar_atomic(out_path, sc);
    std::lock_guard lock(mu);
    ++summary.processed;
  };

  const int workers = std::max(1, std::min<int>(cfg.concurrency, static_cast<int>(index.samples.size())));
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= index.samples.size()) break;
      const auto& sample = index.samples[i];
      try {
        process_one(sample);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        ++summary.failed;
        summary.failures.emplace_back(sample.sample_id, e.what());
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return summary;
}

void write_synthetic_fixtures(const data::DatasetIndex& index, const data::SyntheticTruth& truth,
                              const fs::path& fixture_dir) {
  const AttributeSchema schema = AttributeSchema::for_type(index.object_type);
  for (std::size_t si = 0; si < index.samples.size(); ++si) {
    const auto& sample = index.samples[si];
    const auto& id_attrs = truth.identity_attrs.at(static_cast<std::size_t>(sample.identity));
    const auto& env_attrs = truth.environment_attrs.at(si);
    const auto& [supp_name, supp_modality] = truth.suppressed.at(static_cast<std::size_t>(sample.identity));
    for (int m = 0; m < data::kNumModalities; ++m) {
      const std::string prompt = build_attribute_prompt(schema, static_cast<data::Modality>(m));
      for (std::size_t b = 0; b < kSyntheticBackends.size(); ++b) {
        nlohmann::json j;
        for (const auto& name : schema.all()) {
          std::string value;
          if (schema.is_environment(name)) {
            value = env_attrs.at(name);
          } else if (name == supp_name && m == static_cast<int>(supp_modality)) {
            value = "unknown";
          } else {
            value = id_attrs.at(name);
          }
          std::uint64_t key = mix_keys(hash_string(sample.sample_id.data(), sample.sample_id.size()),
                                       static_cast<std::uint64_t>(m));
          key = mix_keys(key, hash_string(name.data(), name.size()));
          key = mix_keys(key, static_cast<std::uint64_t>(b) + 11);
          RandomStream rs(key);
          double conf;
          if (value == "unknown")
            conf = 0.10 + 0.20 * rs.uniform();
          else
            conf = (b == 0 ? 0.55 + 0.40 * rs.uniform() : 0.60 + 0.35 * rs.uniform());
          j[name] = {{"value", value}, {"confidence", conf}};
        }
        const std::string response = j.dump(2);
        write_fixture(fixture_dir, fixture_key(kSyntheticBackends[b], prompt, &sample.images[m]),
                      response);
      }
    }
  }
}

}  // namespace moereid::captions
