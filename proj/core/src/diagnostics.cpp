#include "moereid/diagnostics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fs = std::filesystem;

namespace moereid::diag {

namespace {

Image grid_to_image(const Tensor& grid, int upscale, double lo, double hi) {
  const int h = static_cast<int>(grid.rows()) * upscale;
  const int w = static_cast<int>(grid.cols()) * upscale;
  Image img(h, w);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = grid(y / upscale, x / upscale);
      const auto px = static_cast<std::uint8_t>(
          std::clamp((v - lo) / span, 0.0, 1.0) * 255.0 + 0.5);
      img.at(y, x, 0) = px;
      img.at(y, x, 1) = px;
      img.at(y, x, 2) = px;
    }
  return img;
}

void write_csv_matrix(std::ofstream& out, const std::string& tag, const Tensor& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    out << tag;
    for (Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
}

}  // namespace

DiagSummary export_diagnostics(Model& model, const data::DatasetIndex& index, const DiagConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  DiagSummary summary;

  std::ofstream omega_csv(cfg.out_dir / "omega.csv");
  omega_csv << "sample";
  for (int e = 0; e < model.config().num_structure_experts; ++e) omega_csv << ",expert" << e;
  omega_csv << "\n";
  std::ofstream attn_csv(cfg.out_dir / "attention.csv");
  attn_csv << "sample:entry:head,weights...\n";
  std::ofstream norms_csv(cfg.out_dir / "structure_norms.csv");
  norms_csv << "sample:expert,token_norms...\n";

  const int limit = std::min<int>(cfg.max_samples, static_cast<int>(index.samples.size()));
  for (int si = 0; si < limit; ++si) {
    const data::MultiModalSample& raw = index.samples[static_cast<std::size_t>(si)];
    BatchSample bs;
    for (int m = 0; m < 3; ++m) {
      const Image& img = raw.images[static_cast<std::size_t>(m)];
      bs.images[static_cast<std::size_t>(m)] =
          (img.height == model.config().encoder.image_h && img.width == model.config().encoder.image_w)
              ? img
              : resize_bilinear(img, model.config().encoder.image_h, model.config().encoder.image_w);
    }
    bs.captions = raw.captions;
    bs.label = raw.identity;

    ad::Tape tape;
    Batch batch;
    batch.samples.push_back(bs);
    ForwardDiagnostics diags;
    model.forward(tape, batch, /*training=*/false, /*step=*/0, &diags);
    const SampleDiagnostics& sd = diags.samples[0];
    ++summary.samples;

    // Full routing state as a structured file alongside the rendered maps.
    if (!sd.routes.empty()) {
      nlohmann::json experts = nlohmann::json::array();
      for (const auto& per_modality : sd.routes) {
        nlohmann::json modalities = nlohmann::json::object();
        for (int m = 0; m < 3; ++m) {
          const tmse::RouteState& st = per_modality[static_cast<std::size_t>(m)];
          nlohmann::json entry{{"sigma", st.sigma}, {"modulated", st.modulated}};
          auto matrix = [](const Tensor& t) {
            nlohmann::json rows = nlohmann::json::array();
            for (Index r = 0; r < t.rows(); ++r) {
              nlohmann::json row = nlohmann::json::array();
              for (Index c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
              rows.push_back(std::move(row));
            }
            return rows;
          };
          entry["alpha"] = matrix(st.alpha);
          entry["mask"] = matrix(st.mask);
          if (st.modulated) {
            entry["beta"] = matrix(st.beta);
            entry["gamma"] = matrix(st.gamma);
          }
          modalities[data::kModalityNames[m]] = std::move(entry);
        }
        experts.push_back(std::move(modalities));
      }
      std::ofstream routes(cfg.out_dir / (raw.sample_id + "_routes.json"));
      routes << nlohmann::json{{"sample_id", raw.sample_id}, {"experts", std::move(experts)}}.dump(1)
             << "\n";
    }

    for (std::size_t e = 0; e < sd.routes.size(); ++e)
      for (int m = 0; m < 3; ++m) {
        const tmse::RouteState& st = sd.routes[e][static_cast<std::size_t>(m)];
        char name[128];
        std::snprintf(name, sizeof(name), "%s_expert%zu_%s_mask.png", raw.sample_id.c_str(), e,
                      data::kModalityNames[m]);
        save_png(grid_to_image(st.mask, cfg.upscale, 0.0, 1.0), cfg.out_dir / name);
        ++summary.mask_images;
        std::snprintf(name, sizeof(name), "%s_expert%zu_%s_score.png", raw.sample_id.c_str(), e,
                      data::kModalityNames[m]);
        double lo = st.alpha(0, 0);
        double hi = lo;
        for (Index i = 0; i < st.alpha.size(); ++i) {
          lo = std::min(lo, st.alpha.at_flat(i));
          hi = std::max(hi, st.alpha.at_flat(i));
        }
        save_png(grid_to_image(st.alpha, cfg.upscale, lo, hi), cfg.out_dir / name);
      }

    if (sd.omega.size() > 0) {
      for (Index r = 0; r < sd.omega.rows(); ++r) {
        omega_csv << raw.sample_id;
        for (Index c = 0; c < sd.omega.cols(); ++c) omega_csv << ',' << sd.omega(r, c);
        omega_csv << '\n';
      }
    }
    for (std::size_t e = 0; e < sd.structure_norms.size(); ++e)
      write_csv_matrix(norms_csv, raw.sample_id + ":expert" + std::to_string(e),
                       transpose(sd.structure_norms[e]));
    for (std::size_t entry = 0; entry < sd.attention.size(); ++entry)
      for (std::size_t head = 0; head < sd.attention[entry].size(); ++head)
        write_csv_matrix(attn_csv,
                         raw.sample_id + ":entry" + std::to_string(entry) + ":head" +
                             std::to_string(head),
                         sd.attention[entry][head]);
  }
  summary.omega_csv = cfg.out_dir / "omega.csv";
  summary.attention_csv = cfg.out_dir / "attention.csv";
  return summary;
}

}  // namespace moereid::diag
