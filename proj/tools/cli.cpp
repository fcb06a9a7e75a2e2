#include "cli.hpp"

#include "moereid/ablation.hpp"
#include "moereid/captions.hpp"
#include "moereid/checkpoint.hpp"
#include "moereid/diagnostics.hpp"
#include "moereid/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace moereid::cli {

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

struct SynthArgs {
  std::string out;
  int ids = 8;
  int per_id = 4;
  int height = 32;
  int width = 16;
  std::uint64_t seed = 0;
  std::string object_type = "person";
  bool force = false;
  std::string fixtures;
};

int cmd_synth(const SynthArgs& a) {
  data::SyntheticSpec spec;
  spec.num_ids = a.ids;
  spec.samples_per_id = a.per_id;
  spec.height = a.height;
  spec.width = a.width;
  spec.seed = a.seed;
  spec.object_type = data::object_type_from_name(a.object_type);
  const auto ds = data::generate_synthetic_with_truth(spec);
  data::write_dataset(ds.index, a.out, a.force);
  if (!a.fixtures.empty()) captions::write_synthetic_fixtures(ds.index, ds.truth, a.fixtures);
  nlohmann::json echo{{"command", "synth"},
                      {"out", a.out},
                      {"ids", a.ids},
                      {"per_id", a.per_id},
                      {"height", a.height},
                      {"width", a.width},
                      {"seed", a.seed},
                      {"object_type", a.object_type},
                      {"fixtures", a.fixtures}};
  write_json(fs::path(a.out) / "synth_config.json", echo);
  std::cout << "wrote " << ds.index.samples.size() << " samples ("
            << ds.index.num_identities() << " identities) to " << a.out << "\n";
  return 0;
}

struct CaptionArgs {
  std::string root;
  std::string replay;
  std::string record_dir;
  std::string out_captions;
  std::vector<std::string> backends = {"backend-a", "backend-b"};
  std::string composer = "template";
  std::string object_type = "person";
  double threshold = 0.5;
  int concurrency = 4;
  bool force = false;
};

int cmd_caption(const CaptionArgs& a) {
  const auto index = data::load_dataset(a.root, data::object_type_from_name(a.object_type));
  if (a.replay.empty())
    throw std::runtime_error(
        "no live backend configured: commercial clients are out of scope, pass --replay FIXTURE_DIR");

  std::vector<std::unique_ptr<captions::MllmClient>> owned;
  std::vector<captions::MllmClient*> clients;
  for (const auto& backend : a.backends) {
    owned.push_back(std::make_unique<captions::ReplayClient>(backend, a.replay));
    clients.push_back(owned.back().get());
  }
  captions::PipelineConfig cfg;
  cfg.complement.threshold = a.threshold;
  cfg.composer = a.composer == "llm" ? captions::Composer::kLlm : captions::Composer::kTemplate;
  cfg.concurrency = a.concurrency;
  cfg.force = a.force;
  std::unique_ptr<captions::MllmClient> composer_client;
  if (cfg.composer == captions::Composer::kLlm) {
    composer_client = std::make_unique<captions::ReplayClient>("composer", a.replay);
  }
  const fs::path out_dir = a.out_captions.empty() ? fs::path(a.root) / "captions" : fs::path(a.out_captions);
  write_json(out_dir / "caption_config.json",
             nlohmann::json{{"command", "caption"},
                            {"root", a.root},
                            {"replay", a.replay},
                            {"backends", a.backends},
                            {"composer", a.composer},
                            {"object_type", a.object_type},
                            {"threshold", a.threshold},
                            {"concurrency", a.concurrency}});
  const auto summary = captions::run_pipeline(index, clients, composer_client.get(), cfg, out_dir);
  std::cout << "captions: processed=" << summary.processed << " skipped=" << summary.skipped
            << " failed=" << summary.failed << "\n";
  for (const auto& [sample, reason] : summary.failures)
    std::cerr << "  failed " << sample << ": " << reason << "\n";
  return summary.failed == 0 ? 0 : 1;
}

struct TrainArgs {
  std::string root;
  std::string out;
  std::string config_file;
  std::string object_type = "person";
  // overrides; negative numeric values mean "not set"
  long steps = -1;
  double lr = -1.0;
  int nt = -1, nc = -1, dim = -1;
  int p = -1, k = -1;
  long eval_every = -1;
  long dump_routes = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_tmse = false, no_csse = false, no_mmfa = false;
  bool augment = false;
  bool full_scale_optim = false;
  std::string protocol;
  std::string sampling;
};

std::pair<ModelConfig, TrainConfig> resolve_train_config(const TrainArgs& a) {
  ModelConfig mc;
  TrainConfig tc;
  if (!a.config_file.empty()) {
    const auto j = read_json(a.config_file);
    if (j.contains("model")) mc = j.at("model").get<ModelConfig>();
    if (j.contains("train")) {
      const auto& t = j.at("train");
      tc.steps = t.value("steps", tc.steps);
      tc.batch_ids = t.value("batch_ids", tc.batch_ids);
      tc.samples_per_id = t.value("samples_per_id", tc.samples_per_id);
      tc.eval_every = t.value("eval_every", tc.eval_every);
      tc.seed = t.value("seed", tc.seed);
      tc.optim.lr = t.value("lr", tc.optim.lr);
      tc.optim.weight_decay = t.value("weight_decay", tc.optim.weight_decay);
      tc.use_augment = t.value("augment", tc.use_augment);
      if (t.contains("protocol"))
        tc.eval_protocol = eval::protocol_from_name(t.at("protocol").get<std::string>());
    }
  }
  if (a.full_scale_optim) tc.optim = OptimConfig::full_scale_profile();
  if (a.steps >= 0) tc.steps = a.steps;
  if (a.lr >= 0) tc.optim.lr = a.lr;
  if (a.nt >= 0) mc.num_semantic_experts = a.nt;
  if (a.nc >= 0) mc.num_structure_experts = a.nc;
  if (a.dim >= 0) mc.encoder.dim = a.dim;
  if (a.p >= 0) tc.batch_ids = a.p;
  if (a.k >= 0) tc.samples_per_id = a.k;
  if (a.eval_every >= 0) tc.eval_every = a.eval_every;
  if (a.dump_routes >= 0) tc.dump_routes_every = a.dump_routes;
  if (a.seed_set) {
    mc.seed = a.seed;
    tc.seed = a.seed;
  }
  if (a.no_tmse) mc.enable_tmse = false;
  if (a.no_csse) mc.enable_csse = false;
  if (a.no_mmfa) mc.enable_mmfa = false;
  if (a.augment) tc.use_augment = true;
  if (!a.protocol.empty()) tc.eval_protocol = eval::protocol_from_name(a.protocol);
  if (!a.sampling.empty()) mc.sampling = tmse::sampling_strategy_from_name(a.sampling);
  tc.out_dir = a.out;
  return {mc, tc};
}

int cmd_train(const TrainArgs& a) {
  const auto index = data::load_dataset(a.root, data::object_type_from_name(a.object_type));
  auto [mc, tc] = resolve_train_config(a);

  // Held-out splits when the dataset has them; held-in otherwise.
  const bool has_test = !index.split_indices(data::Split::kQuery).empty() &&
                        !index.split_indices(data::Split::kGallery).empty();
  if (has_test) {
    tc.eval_query_split = data::Split::kQuery;
    tc.eval_gallery_split = data::Split::kGallery;
  } else {
    tc.eval_query_split = data::Split::kTrain;
    tc.eval_gallery_split = data::Split::kTrain;
  }

  mc.validate();
  nlohmann::json echo;
  echo["model"] = mc;
  echo["train"] = {{"steps", tc.steps},
                   {"batch_ids", tc.batch_ids},
                   {"samples_per_id", tc.samples_per_id},
                   {"eval_every", tc.eval_every},
                   {"seed", tc.seed},
                   {"lr", tc.optim.lr},
                   {"weight_decay", tc.optim.weight_decay},
                   {"augment", tc.use_augment},
                   {"protocol", eval::protocol_name(tc.eval_protocol)},
                   {"eval_query_split", data::split_name(tc.eval_query_split)},
                   {"eval_gallery_split", data::split_name(tc.eval_gallery_split)}};
  write_json(fs::path(a.out) / "resolved_config.json", echo);

  Model model(mc, index.num_train_identities());
  const TrainResult result = train_model(model, index, tc);
  if (result.final_metrics) {
    write_json(fs::path(a.out) / "metrics.json", eval::metrics_to_json(*result.final_metrics));
    std::cout << "final: mAP=" << result.final_metrics->mAP << " R1=" << result.final_metrics->r1
              << " (queries=" << result.final_metrics->num_queries << ")\n";
  }
  std::cout << "checkpoint: " << result.last_checkpoint.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string root;
  std::string checkpoint;
  std::string out;
  std::string protocol = "none";
  std::string split = "test";
  std::string object_type = "person";
  bool l2_normalize = false;
};

int cmd_eval(const EvalArgs& a) {
  const auto index = data::load_dataset(a.root, data::object_type_from_name(a.object_type));
  const eval::Protocol protocol = eval::protocol_from_name(a.protocol);
  if (protocol == eval::Protocol::kMsvr310Strict && !index.has_time_labels)
    throw std::runtime_error("strict protocol needs time labels, and this dataset has none");

  nlohmann::json meta = read_checkpoint_meta(a.checkpoint);
  const ModelConfig mc = meta.at("config").get<ModelConfig>();
  Model model(mc, meta.at("num_classes").get<int>());
  load_checkpoint(a.checkpoint, model.params());

  eval::RetrievalSet sets;
  if (a.split == "train") {
    sets = make_retrieval_set(model, index, data::Split::kTrain, data::Split::kTrain);
  } else {
    sets = make_retrieval_set(model, index, data::Split::kQuery, data::Split::kGallery);
  }
  const eval::Metrics metrics = eval::evaluate(sets, protocol, a.l2_normalize);
  nlohmann::json report = eval::metrics_to_json(metrics);
  report["split"] = a.split;
  report["l2_normalize"] = a.l2_normalize;
  if (!a.out.empty()) write_json(fs::path(a.out) / "metrics.json", report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

struct StudyArgs {
  std::string axis = "modules";
  std::string out;
  long steps = 30;
  int ids = 4;
  int per_id = 4;
  int p = 2, k = 2;
  int dim = 32;
  int nt = 2, nc = 2;
  std::vector<std::uint64_t> seeds = {1};
  std::uint64_t dataset_seed = 7;
  bool run_logs = false;
};

int cmd_study(const StudyArgs& a) {
  study::StudySpec spec;
  spec.axis = study::axis_from_name(a.axis);
  spec.base.encoder.dim = a.dim;
  spec.base.num_semantic_experts = a.nt;
  spec.base.num_structure_experts = a.nc;
  spec.budget.steps = a.steps;
  spec.budget.batch_ids = a.p;
  spec.budget.samples_per_id = a.k;
  spec.dataset.num_ids = a.ids;
  spec.dataset.samples_per_id = a.per_id;
  spec.dataset.seed = a.dataset_seed;
  spec.seeds = a.seeds;
  if (!a.out.empty() && a.run_logs) spec.run_log_dir = fs::path(a.out) / "runs";
  const auto report = study::run_study(spec);
  if (!a.out.empty()) {
    write_json(fs::path(a.out) / "study.json", report.to_json());
    std::ofstream table(fs::path(a.out) / "study.txt");
    table << report.to_table();
  }
  std::cout << report.to_table();
  for (const auto& row : report.rows)
    if (row.failed) return 1;
  return 0;
}

struct DiagArgs {
  std::string root;
  std::string checkpoint;
  std::string out;
  std::string object_type = "person";
  int samples = 1;
};

int cmd_diag(const DiagArgs& a) {
  const auto index = data::load_dataset(a.root, data::object_type_from_name(a.object_type));
  nlohmann::json meta = read_checkpoint_meta(a.checkpoint);
  const ModelConfig mc = meta.at("config").get<ModelConfig>();
  Model model(mc, meta.at("num_classes").get<int>());
  load_checkpoint(a.checkpoint, model.params());
  diag::DiagConfig cfg;
  cfg.max_samples = a.samples;
  cfg.out_dir = a.out;
  write_json(fs::path(a.out) / "diag_config.json",
             nlohmann::json{{"command", "diag"},
                            {"root", a.root},
                            {"checkpoint", a.checkpoint},
                            {"samples", a.samples},
                            {"object_type", a.object_type}});
  const auto summary = diag::export_diagnostics(model, index, cfg);
  std::cout << "diagnostics: samples=" << summary.samples << " mask_images=" << summary.mask_images
            << " -> " << a.out << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"tri-modal re-identification with text-modulated mixture-of-experts"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic tri-modal dataset");
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--ids", synth.ids);
  synth_cmd->add_option("--per-id", synth.per_id);
  synth_cmd->add_option("--height", synth.height);
  synth_cmd->add_option("--width", synth.width);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--object-type", synth.object_type)->check(CLI::IsMember({"person", "vehicle"}));
  synth_cmd->add_flag("--force", synth.force);
  synth_cmd->add_option("--fixtures", synth.fixtures, "also emit replay fixtures for the caption pipeline");

  CaptionArgs caption;
  auto* caption_cmd = app.add_subcommand("caption", "run the attribute/caption pipeline");
  caption_cmd->add_option("--root", caption.root)->required();
  caption_cmd->add_option("--replay", caption.replay, "replay fixture directory (offline mode)");
  caption_cmd->add_option("--out-captions", caption.out_captions);
  caption_cmd->add_option("--backends", caption.backends)->delimiter(',');
  caption_cmd->add_option("--composer", caption.composer)->check(CLI::IsMember({"template", "llm"}));
  caption_cmd->add_option("--object-type", caption.object_type)->check(CLI::IsMember({"person", "vehicle"}));
  caption_cmd->add_option("--threshold", caption.threshold);
  caption_cmd->add_option("--concurrency", caption.concurrency);
  caption_cmd->add_flag("--force", caption.force);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset root");
  train_cmd->add_option("--root", train.root)->required();
  train_cmd->add_option("--out", train.out)->required();
  train_cmd->add_option("--config", train.config_file);
  train_cmd->add_option("--object-type", train.object_type)->check(CLI::IsMember({"person", "vehicle"}));
  train_cmd->add_option("--steps", train.steps);
  train_cmd->add_option("--lr", train.lr);
  train_cmd->add_option("--nt", train.nt, "semantic expert count");
  train_cmd->add_option("--nc", train.nc, "structure expert count");
  train_cmd->add_option("--dim", train.dim);
  train_cmd->add_option("--p", train.p, "identities per batch");
  train_cmd->add_option("--k", train.k, "samples per identity");
  train_cmd->add_option("--eval-every", train.eval_every);
  train_cmd->add_option("--dump-routes", train.dump_routes,
                        "dump routing state every N steps into the run directory");
  train_cmd->add_option("--seed", train.seed)->each([&](const std::string&) { train.seed_set = true; });
  train_cmd->add_flag("--no-tmse", train.no_tmse);
  train_cmd->add_flag("--no-csse", train.no_csse);
  train_cmd->add_flag("--no-mmfa", train.no_mmfa);
  train_cmd->add_flag("--augment", train.augment);
  train_cmd->add_flag("--full-scale-optim", train.full_scale_optim, "full-scale optimizer profile");
  train_cmd->add_option("--protocol", train.protocol)
      ->check(CLI::IsMember({"none", "standard_camera", "msvr310_strict"}));
  train_cmd->add_option("--sampling", train.sampling)
      ->check(CLI::IsMember({"dynamic", "all_token", "top_k", "fixed_sigma"}));

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--root", eval_args.root)->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--out", eval_args.out);
  eval_cmd->add_option("--protocol", eval_args.protocol)
      ->check(CLI::IsMember({"none", "standard_camera", "msvr310_strict"}));
  eval_cmd->add_option("--split", eval_args.split)->check(CLI::IsMember({"test", "train"}));
  eval_cmd->add_option("--object-type", eval_args.object_type)
      ->check(CLI::IsMember({"person", "vehicle"}));
  eval_cmd->add_flag("--l2-normalize", eval_args.l2_normalize);

  StudyArgs study_args;
  auto* study_cmd = app.add_subcommand("study", "run an ablation study grid");
  study_cmd->add_option("--axis", study_args.axis)
      ->check(CLI::IsMember({"modules", "route_type", "sampling_strategy", "caption_quality",
                             "expert_count"}));
  study_cmd->add_option("--out", study_args.out);
  study_cmd->add_option("--steps", study_args.steps);
  study_cmd->add_option("--ids", study_args.ids);
  study_cmd->add_option("--per-id", study_args.per_id);
  study_cmd->add_option("--p", study_args.p);
  study_cmd->add_option("--k", study_args.k);
  study_cmd->add_option("--dim", study_args.dim);
  study_cmd->add_option("--nt", study_args.nt);
  study_cmd->add_option("--nc", study_args.nc);
  study_cmd->add_option("--seeds", study_args.seeds)->delimiter(',');
  study_cmd->add_option("--dataset-seed", study_args.dataset_seed);
  study_cmd->add_flag("--run-logs", study_args.run_logs, "write per-run training logs under <out>/runs");

  DiagArgs diag_args;
  auto* diag_cmd = app.add_subcommand("diag", "export masks, routing weights and attention maps");
  diag_cmd->add_option("--root", diag_args.root)->required();
  diag_cmd->add_option("--checkpoint", diag_args.checkpoint)->required();
  diag_cmd->add_option("--out", diag_args.out)->required();
  diag_cmd->add_option("--samples", diag_args.samples);
  diag_cmd->add_option("--object-type", diag_args.object_type)
      ->check(CLI::IsMember({"person", "vehicle"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*caption_cmd) return cmd_caption(caption);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*study_cmd) return cmd_study(study_args);
    if (*diag_cmd) return cmd_diag(diag_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace moereid::cli
