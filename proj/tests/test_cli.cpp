#include "cli.hpp"

#include "moereid/captions.hpp"
#include "moereid/data.hpp"
#include "moereid/image.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace moereid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("moereid_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> dir_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root).string()] = read_file(entry.path());
  return out;
}

int run_cli(std::initializer_list<std::string> args) {
  return moereid::cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("synth writes the documented layout and is reproducible") {
  const auto dir = temp_dir("synth");
  const std::string out = (dir / "ds").string();
  REQUIRE(run_cli({"synth", "--out", out, "--ids", "4", "--per-id", "2", "--seed", "7"}) == 0);
  CHECK(fs::exists(dir / "ds" / "rgb" / "id000_s00.png"));
  CHECK(fs::exists(dir / "ds" / "nir" / "id003_s01.png"));
  CHECK(fs::exists(dir / "ds" / "tir" / "id001_s00.png"));
  CHECK(fs::exists(dir / "ds" / "captions" / "id000_s00.json"));
  CHECK(fs::exists(dir / "ds" / "meta.csv"));

  SUBCASE("a second run without --force refuses to clobber") {
    CHECK(run_cli({"synth", "--out", out, "--ids", "4", "--per-id", "2", "--seed", "7"}) != 0);
  }
  SUBCASE("a forced rerun with the same seed is byte-identical") {
    const auto before = dir_contents(dir / "ds");
    REQUIRE(run_cli({"synth", "--out", out, "--ids", "4", "--per-id", "2", "--seed", "7", "--force"}) == 0);
    CHECK(dir_contents(dir / "ds") == before);
  }
  fs::remove_all(dir);
}

TEST_CASE("caption command replays fixtures deterministically") {
  const auto dir = temp_dir("caption");
  const std::string root = (dir / "ds").string();
  const std::string fx = (dir / "fx").string();
  REQUIRE(run_cli({"synth", "--out", root, "--ids", "2", "--per-id", "2", "--seed", "3", "--fixtures",
               fx}) == 0);

  REQUIRE(run_cli({"caption", "--root", root, "--replay", fx, "--force"}) == 0);
  const auto first = dir_contents(dir / "ds" / "captions");
  REQUIRE(run_cli({"caption", "--root", root, "--replay", fx, "--force"}) == 0);
  CHECK(dir_contents(dir / "ds" / "captions") == first);

  SUBCASE("replay without fixtures fails and names the samples") {
    const std::string empty_fx = (dir / "no_fixtures").string();
    fs::create_directories(empty_fx);
    CHECK(run_cli({"caption", "--root", root, "--replay", empty_fx, "--force"}) != 0);
  }
  SUBCASE("missing --replay is a configuration error") {
    CHECK(run_cli({"caption", "--root", root, "--force"}) != 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("train, eval, and diag commands cooperate on a tiny run") {
  const auto dir = temp_dir("train");
  const std::string root = (dir / "ds").string();
  REQUIRE(run_cli({"synth", "--out", root, "--ids", "3", "--per-id", "2", "--seed", "5"}) == 0);
  const std::string out = (dir / "run").string();
  REQUIRE(run_cli({"train", "--root", root, "--out", out, "--steps", "4", "--p", "2", "--k", "2",
               "--dim", "32", "--nt", "2", "--nc", "2", "--seed", "9"}) == 0);
  CHECK(fs::exists(fs::path(out) / "resolved_config.json"));
  CHECK(fs::exists(fs::path(out) / "train_log.jsonl"));
  CHECK(fs::exists(fs::path(out) / "checkpoint.json"));
  CHECK(fs::exists(fs::path(out) / "metrics.json"));

  const auto resolved = nlohmann::json::parse(read_file(fs::path(out) / "resolved_config.json"));
  CHECK(resolved.at("model").at("dim").get<int>() == 32);
  CHECK(resolved.at("train").at("steps").get<long>() == 4);

  SUBCASE("the metrics report carries every headline number") {
    const auto metrics = nlohmann::json::parse(read_file(fs::path(out) / "metrics.json"));
    for (const char* key : {"mAP", "R1", "R5", "R10", "num_queries", "num_skipped", "protocol"})
      CHECK(metrics.contains(key));
  }
  SUBCASE("eval on the train split works; strict protocol needs time labels") {
    const std::string eval_out = (dir / "eval").string();
    REQUIRE(run_cli({"eval", "--root", root, "--checkpoint", (fs::path(out) / "checkpoint.json").string(),
                 "--split", "train", "--protocol", "none", "--out", eval_out}) == 0);
    const auto metrics = nlohmann::json::parse(read_file(fs::path(eval_out) / "metrics.json"));
    CHECK(metrics.at("protocol").get<std::string>() == "none");

    // strip the time_label column and expect the strict protocol to refuse
    auto meta_lines = read_file(fs::path(root) / "meta.csv");
    std::ofstream meta(fs::path(root) / "meta.csv");
    std::istringstream in(meta_lines);
    std::string line;
    while (std::getline(in, line)) {
      std::string out_line;
      int field = 0;
      std::istringstream fields(line);
      std::string tok;
      while (std::getline(fields, tok, ',')) {
        if (field != 3) out_line += (out_line.empty() ? "" : ",") + tok;
        ++field;
      }
      meta << out_line << "\n";
    }
    meta.close();
    CHECK(run_cli({"eval", "--root", root, "--checkpoint", (fs::path(out) / "checkpoint.json").string(),
               "--split", "train", "--protocol", "msvr310_strict"}) != 0);
  }
  SUBCASE("diag exports one mask image per expert and modality") {
    const std::string diag_out = (dir / "diag").string();
    REQUIRE(run_cli({"diag", "--root", root, "--checkpoint", (fs::path(out) / "checkpoint.json").string(),
                 "--out", diag_out, "--samples", "1"}) == 0);
    int mask_images = 0;
    for (const auto& entry : fs::directory_iterator(diag_out)) {
      const std::string name = entry.path().filename().string();
      if (name.find("_mask.png") == std::string::npos) continue;
      ++mask_images;
      const Image img = load_png(entry.path());
      for (const auto px : img.pixels) CHECK((px == 0 || px == 255));
    }
    CHECK(mask_images == 2 * 3);  // experts x modalities

    // routing weights in the CSV sum to one per row
    std::ifstream omega(fs::path(diag_out) / "omega.csv");
    std::string line;
    std::getline(omega, line);  // header
    int rows = 0;
    while (std::getline(omega, line)) {
      std::istringstream fields(line);
      std::string tok;
      std::getline(fields, tok, ',');  // sample id
      double sum = 0.0;
      while (std::getline(fields, tok, ',')) sum += std::stod(tok);
      CHECK(std::abs(sum - 1.0) < 1e-6);
      ++rows;
    }
    CHECK(rows >= 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("train honors the module toggles") {
  const auto dir = temp_dir("toggles");
  const std::string root = (dir / "ds").string();
  REQUIRE(run_cli({"synth", "--out", root, "--ids", "2", "--per-id", "2", "--seed", "1"}) == 0);
  const std::string out = (dir / "baseline").string();
  REQUIRE(run_cli({"train", "--root", root, "--out", out, "--steps", "2", "--p", "2", "--k", "2",
               "--dim", "32", "--no-tmse", "--no-csse", "--no-mmfa", "--seed", "2"}) == 0);
  const auto resolved = nlohmann::json::parse(read_file(fs::path(out) / "resolved_config.json"));
  CHECK(resolved.at("model").at("enable_mmfa").get<bool>() == false);
  fs::remove_all(dir);
}

TEST_CASE("same seed twice gives identical loss curves") {
  const auto dir = temp_dir("repro");
  const std::string root = (dir / "ds").string();
  REQUIRE(run_cli({"synth", "--out", root, "--ids", "3", "--per-id", "2", "--seed", "5"}) == 0);
  const std::string out1 = (dir / "run1").string();
  const std::string out2 = (dir / "run2").string();
  for (const auto& out : {out1, out2})
    REQUIRE(run_cli({"train", "--root", root, "--out", out, "--steps", "3", "--p", "2", "--k", "2",
                 "--dim", "32", "--seed", "11"}) == 0);
  CHECK(read_file(fs::path(out1) / "train_log.jsonl") == read_file(fs::path(out2) / "train_log.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("study command writes the grid report") {
  const auto dir = temp_dir("study");
  const std::string out = (dir / "report").string();
  REQUIRE(run_cli({"study", "--axis", "modules", "--steps", "2", "--ids", "3", "--per-id", "2", "--p",
               "2", "--k", "2", "--dim", "16", "--nt", "2", "--nc", "2", "--out", out}) == 0);
  const auto report = nlohmann::json::parse(read_file(fs::path(out) / "study.json"));
  CHECK(report.at("rows").size() == 4);
  CHECK(fs::exists(fs::path(out) / "study.txt"));
  fs::remove_all(dir);
}

TEST_CASE("a config file drives training, flags override it") {
  const auto dir = temp_dir("config");
  const std::string root = (dir / "ds").string();
  REQUIRE(run_cli({"synth", "--out", root, "--ids", "2", "--per-id", "2", "--seed", "5"}) == 0);
  nlohmann::json cfg;
  cfg["model"] = {{"dim", 32}, {"num_semantic_experts", 2}, {"num_structure_experts", 2}};
  cfg["train"] = {{"steps", 3}, {"batch_ids", 2}, {"samples_per_id", 2}, {"lr", 1e-3}};
  const fs::path cfg_path = dir / "run.json";
  std::ofstream(cfg_path) << cfg.dump();
  const std::string out = (dir / "run").string();
  REQUIRE(run_cli({"train", "--root", root, "--out", out, "--config", cfg_path.string(), "--steps",
               "2"}) == 0);
  const auto resolved = nlohmann::json::parse(read_file(fs::path(out) / "resolved_config.json"));
  CHECK(resolved.at("model").at("dim").get<int>() == 32);       // from the file
  CHECK(resolved.at("train").at("steps").get<long>() == 2);     // flag wins
  CHECK(resolved.at("train").at("lr").get<double>() == 1e-3);   // from the file
  fs::remove_all(dir);
}
