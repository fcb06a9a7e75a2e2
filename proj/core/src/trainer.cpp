#include "moereid/trainer.hpp"

#include "moereid/checkpoint.hpp"
#include "moereid/losses.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moereid {

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < t.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json routes_to_json(const ForwardDiagnostics& diags) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& sd : diags.samples) {
    nlohmann::json experts = nlohmann::json::array();
    for (const auto& per_modality : sd.routes) {
      nlohmann::json modalities = nlohmann::json::object();
      for (int m = 0; m < 3; ++m) {
        const tmse::RouteState& st = per_modality[static_cast<std::size_t>(m)];
        nlohmann::json entry{{"alpha", tensor_to_json(st.alpha)},
                             {"sigma", st.sigma},
                             {"mask", tensor_to_json(st.mask)},
                             {"modulated", st.modulated}};
        if (st.modulated) {
          entry["beta"] = tensor_to_json(st.beta);
          entry["gamma"] = tensor_to_json(st.gamma);
        }
        modalities[data::kModalityNames[m]] = std::move(entry);
      }
      experts.push_back(std::move(modalities));
    }
    nlohmann::json js{{"routes", std::move(experts)}};
    if (sd.omega.size() > 0) js["omega"] = tensor_to_json(sd.omega);
    samples.push_back(std::move(js));
  }
  return nlohmann::json{{"samples", std::move(samples)}};
}

BatchSample to_batch_sample(const data::MultiModalSample& s, const ModelConfig& cfg) {
  BatchSample out;
  for (int m = 0; m < 3; ++m) {
    const Image& img = s.images[static_cast<std::size_t>(m)];
    out.images[static_cast<std::size_t>(m)] =
        (img.height == cfg.encoder.image_h && img.width == cfg.encoder.image_w)
            ? img
            : resize_bilinear(img, cfg.encoder.image_h, cfg.encoder.image_w);
  }
  out.captions = s.captions;
  out.label = s.identity;
  return out;
}

}  // namespace

Batch make_batch(const data::DatasetIndex& index, const std::vector<std::size_t>& sample_indices,
                 const ModelConfig& cfg, const TrainConfig& tc, long step) {
  Batch batch;
  batch.samples.reserve(sample_indices.size());
  for (std::size_t slot = 0; slot < sample_indices.size(); ++slot) {
    const data::MultiModalSample& raw = index.samples[sample_indices[slot]];
    if (tc.use_augment) {
      const std::uint64_t draw_key =
          mix_keys(static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot));
      batch.samples.push_back(to_batch_sample(data::augment(raw, tc.augment, draw_key), cfg));
    } else {
      batch.samples.push_back(to_batch_sample(raw, cfg));
    }
  }
  return batch;
}

eval::RetrievalSet make_retrieval_set(Model& model, const data::DatasetIndex& index,
                                      data::Split query_split, data::Split gallery_split) {
  eval::RetrievalSet sets;
  auto embed_split = [&](data::Split split, std::vector<eval::RetrievalItem>& out) {
    for (std::size_t i : index.split_indices(split)) {
      const data::MultiModalSample& s = index.samples[i];
      eval::RetrievalItem item;
      item.embedding = model.embed(to_batch_sample(s, model.config()));
      item.identity = s.identity;
      item.camera = s.camera;
      item.time_label = s.time_label;
      item.item_id = static_cast<std::int64_t>(i);
      out.push_back(std::move(item));
    }
  };
  embed_split(query_split, sets.query);
  embed_split(gallery_split, sets.gallery);
  return sets;
}

TrainResult train_model(Model& model, const data::DatasetIndex& index, const TrainConfig& tc) {
  TrainResult result;
  const ModelConfig& cfg = model.config();
  data::PkBatchSampler sampler(index, tc.batch_ids, tc.samples_per_id, tc.seed);
  AdamOptimizer optimizer(model.params(), tc.optim);

  std::ofstream log;
  if (!tc.out_dir.empty()) {
    std::filesystem::create_directories(tc.out_dir);
    log.open(tc.out_dir / "train_log.jsonl");
  }

  auto run_eval = [&]() -> eval::Metrics {
    const eval::RetrievalSet sets =
        make_retrieval_set(model, index, tc.eval_query_split, tc.eval_gallery_split);
    return eval::evaluate(sets, tc.eval_protocol);
  };

  long step = 0;
  std::int64_t epoch = 0;
  while (step < tc.steps) {
    for (const data::PkBatch& pk : sampler.epoch(epoch)) {
      if (step >= tc.steps) break;
      const Batch batch = make_batch(index, pk.sample_indices, cfg, tc, step);
      const std::vector<int> labels = batch.labels();

      ad::Tape tape;
      ForwardDiagnostics diags;
      const ForwardOut out = model.forward(tape, batch, /*training=*/true, step, &diags);
      const ad::NodeId lid = id_loss(tape, out.logits, labels, cfg.label_smoothing);
      const ad::NodeId ltri = triplet_loss(tape, out.embeddings, labels, cfg.margin);
      const ad::NodeId total = tape.add(lid, ltri);

      StepRecord rec;
      rec.step = step;
      rec.id_loss = tape.value(lid).item();
      rec.triplet_loss = tape.value(ltri).item();
      rec.total = tape.value(total).item();
      rec.accuracy = batch_accuracy(tape.value(out.logits), labels);
      if (!std::isfinite(rec.total)) {
        std::ostringstream diag;
        diag << "non-finite loss at step " << step << ": id=" << rec.id_loss
             << " triplet=" << rec.triplet_loss;
        throw std::runtime_error(diag.str());
      }

      tape.backward(total);
      rec.lr = optimizer.step(tape);

      if (!diags.samples.empty()) {
        const auto& routes0 = diags.samples[0].routes;
        if (!routes0.empty()) {
          rec.mask_density.assign(routes0.size() * 3, 0.0);
          for (const auto& sd : diags.samples)
            for (std::size_t e = 0; e < sd.routes.size(); ++e)
              for (int m = 0; m < 3; ++m)
                rec.mask_density[e * 3 + static_cast<std::size_t>(m)] +=
                    sd.routes[e][static_cast<std::size_t>(m)].mask_density() /
                    static_cast<double>(diags.samples.size());
        }
        const Tensor& omega0 = diags.samples[0].omega;
        if (omega0.size() > 0) {
          rec.omega_mean.assign(static_cast<std::size_t>(omega0.cols()), 0.0);
          for (const auto& sd : diags.samples)
            for (Index e = 0; e < sd.omega.cols(); ++e) {
              double col_mean = 0.0;
              for (Index r = 0; r < sd.omega.rows(); ++r) col_mean += sd.omega(r, e);
              rec.omega_mean[static_cast<std::size_t>(e)] +=
                  col_mean / static_cast<double>(sd.omega.rows()) /
                  static_cast<double>(diags.samples.size());
            }
        }
      }

      if (!tc.out_dir.empty() && tc.dump_routes_every > 0 && step % tc.dump_routes_every == 0) {
        std::ofstream routes(tc.out_dir / ("routes_step" + std::to_string(step) + ".json"));
        routes << routes_to_json(diags).dump(1) << "\n";
      }

      if (log && (step % std::max<long>(1, tc.log_every) == 0)) {
        nlohmann::json j{{"step", rec.step},          {"id_loss", rec.id_loss},
                         {"triplet_loss", rec.triplet_loss}, {"total", rec.total},
                         {"accuracy", rec.accuracy},  {"lr", rec.lr},
                         {"mask_density", rec.mask_density}, {"omega_mean", rec.omega_mean}};
        log << j.dump() << "\n";
      }
      result.history.push_back(std::move(rec));

      ++step;
      if (tc.eval_every > 0 && step % tc.eval_every == 0 && step < tc.steps) {
        const eval::Metrics metrics = run_eval();
        if (metrics.mAP > result.best_map) {
          result.best_map = metrics.mAP;
          if (!tc.out_dir.empty()) {
            result.best_checkpoint = tc.out_dir / "best_checkpoint.json";
            nlohmann::json meta;
            meta["config"] = cfg;
            meta["num_classes"] = model.num_classes();
            meta["step"] = step;
            meta["mAP"] = metrics.mAP;
            save_checkpoint(result.best_checkpoint, model.params(), meta);
          }
        }
      }
    }
    ++epoch;
  }

  const eval::Metrics final_metrics = run_eval();
  result.final_metrics = final_metrics;
  if (final_metrics.mAP > result.best_map) {
    result.best_map = final_metrics.mAP;
    if (!tc.out_dir.empty()) {
      result.best_checkpoint = tc.out_dir / "best_checkpoint.json";
      nlohmann::json meta;
      meta["config"] = cfg;
      meta["num_classes"] = model.num_classes();
      meta["step"] = step;
      meta["mAP"] = final_metrics.mAP;
      save_checkpoint(result.best_checkpoint, model.params(), meta);
    }
  }
  if (!tc.out_dir.empty()) {
    result.last_checkpoint = tc.out_dir / "checkpoint.json";
    nlohmann::json meta;
    meta["config"] = cfg;
    meta["num_classes"] = model.num_classes();
    meta["step"] = step;
    save_checkpoint(result.last_checkpoint, model.params(), meta);
  }
  return result;
}

}  // namespace moereid
