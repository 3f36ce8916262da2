#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch_root() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / ("tempov_cli_" + std::to_string(getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

Run tempov(const std::string& args, const std::string& env = "") {
  const fs::path o = scratch_root() / "stdout.txt", e = scratch_root() / "stderr.txt";
  const std::string cmd = env + " " + TEMPOV_CLI_PATH + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

json last_line(const std::string& s) {
  auto end = s.find_last_not_of('\n');
  auto start = s.rfind('\n', end);
  return json::parse(s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1));
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("usage and user errors exit 1 with one json diagnostic line") {
  CHECK(tempov("--help").code == 0);
  CHECK(tempov("map --help").code == 0);

  for (const char* args : {"", "frobnicate", "synth --out x --bogus", "bench --preset huge --out x", "--threads -2 synth --out x"}) {
    CAPTURE(args);
    const auto r = tempov(args);
    CHECK(r.code == 1);
    const auto first = r.err.substr(0, r.err.find('\n'));
    const auto diag = json::parse(first);
    CHECK(diag.at("error") == "usage");
    CHECK(r.err.find("Usage:") != std::string::npos);
  }

  const auto missing = tempov("synth --config /nonexistent/cfg.json --out " + (scratch_root() / "w").string());
  CHECK(missing.code == 1);
  CHECK(json::parse(missing.err).at("error") == "io");

  const auto bad_cfg = scratch_root() / "bad.json";
  write(bad_cfg, {{"cells_per_side", 0}});
  const auto cfg = tempov("synth --config " + bad_cfg.string() + " --out " + (scratch_root() / "w").string());
  CHECK(cfg.code == 1);
  CHECK(json::parse(cfg.err).at("error") == "config");

  const auto seed = tempov("synth --out " + (scratch_root() / "w").string(), "TEMPOV_SEED=banana");
  CHECK(seed.code == 1);
  CHECK(json::parse(seed.err).at("error") == "config");
}

TEST_CASE("synth, pretrain, adapt, evaluate, map and analyze chain through the cli") {
  const fs::path root = scratch_root() / "chain";
  fs::create_directories(root);
  const fs::path world = root / "world";
  write(root / "world.json", {{"cells_per_side", 4}, {"tile_size", 16}, {"clusters_per_country", 16}, {"seed", 3}});
  auto r = tempov("synth --config " + (root / "world.json").string() + " --out " + world.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(world / "folds.json"));
  CHECK(fs::exists(world / "oracle" / "truth.csv"));
  CHECK(fs::exists(world / "runs"));

  write(root / "pretrain.json", {{"preset", "gradcheck"},
                                 {"pretrain", {{"total_steps", 3}, {"warmup_steps", 1}, {"batch_size", 2},
                                               {"global_crop_size", 8}, {"local_crop_size", 4}}}});
  r = tempov("--log " + (root / "pre.jsonl").string() + " pretrain --config " + (root / "pretrain.json").string() +
             " --data " + world.string() + " --out " + (root / "pre.ckpt").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  {
    std::ifstream log(root / "pre.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line); ++lines) {
      const auto rec = json::parse(line);
      for (const char* k : {"step", "lr", "loss_total", "loss_dino", "loss_ibot", "loss_uniform", "grad_norm"})
        CHECK(rec.contains(k));
    }
    CHECK(lines == 3);
  }

  json plan{{"direction", "nowcast"},
            {"stage1", {{"years", {2015}}, {"epochs", 1}, {"lr", 5e-3}}},
            {"stage2", {{"years", {2025}}, {"epochs", 1}, {"lr", 5e-3}}},
            {"lora", {{"rank", 2}}},
            {"batch_size", 8}};
  write(root / "plan.json", plan);
  r = tempov("adapt --ckpt " + (root / "pre.ckpt").string() + " --plan " + (root / "plan.json").string() + " --data " +
             world.string() + " --out " + (root / "held.ckpt").string() + " --test-fold 0 --val-fold 1");
  REQUIRE_MESSAGE(r.code == 0, r.err);

  // Scenario 5 with i = 4 tests on fold 0, which adaptation held out.
  const std::string eval_common = " --folds " + (world / "folds.json").string() + " --data " + world.string();
  r = tempov("evaluate --ckpt " + (root / "held.ckpt").string() + " --scenario all_countries_in_year --country XAA" +
             " --year 2025 --fold 4" + eval_common + " --out " + (root / "eval.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rep = last_line(r.out);
  CHECK(rep.at("country") == "XAA");
  CHECK(fs::exists(root / "eval.json"));

  // Fold 1 is the test fold for i = 0, and it was used for validation: refused.
  r = tempov("evaluate --ckpt " + (root / "held.ckpt").string() + " --scenario 5 --country XAA --year 2025 --fold 0" +
             eval_common);
  CHECK(r.code == 2);
  CHECK(json::parse(r.err).at("error") == "protocol");

  const std::string map_common = " --ckpt " + (root / "held.ckpt").string() + " --grid " + (world / "world.json").string() +
                                 " --tiles " + (world / "tiles").string() + " --pop " + (world / "population").string() +
                                 " --workers-acq 2 --workers-inf 2 --queue 4";
  r = tempov("map" + map_common + " --year 2015 --out " + (root / "m1").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = tempov("map" + map_common + " --year 2025 --baseline " + (root / "m1" / "wealth_map").string() + " --out " +
             (root / "m2").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"wealth_map.json", "wealth_map.bin", "wealth_map.csv", "wealth_map.ppm", "wealth_change.ppm",
                        "telemetry.json", "grid.json"})
    CHECK_MESSAGE(fs::exists(root / "m2" / f), f);

  r = tempov("analyze --map-t1 " + (root / "m1" / "wealth_map").string() + " --map-t2 " +
             (root / "m2" / "wealth_map").string() + " --pop " + (world / "population").string() + " --countries " +
             (world / "grid.csv").string() + " --covariates " + (world / "covariates.csv").string() + " --out " +
             (root / "analysis.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto an = last_line(r.out);
  for (const char* k : {"theil", "convergence", "variance_decomposition", "covariate_effects"}) CHECK(an.contains(k));

  // Every command left a manifest.
  int manifests = 0;
  for (const auto& e : fs::recursive_directory_iterator(root))
    manifests += e.path().filename() == "manifest.json";
  CHECK(manifests >= 7);

  fs::remove_all(scratch_root());
}
