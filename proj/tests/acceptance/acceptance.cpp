// Runs `tempov bench --preset toy` and re-checks every criterion of its report
// against the pinned tolerances, one line per criterion.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  // Appends "label=value (rule)" and folds the condition in.
  void need(bool cond, const std::string& label, const json& value, const std::string& rule) {
    std::ostringstream s;
    s << label << '=' << (value.is_number_float() ? fmt(value.get<double>()) : value.dump()) << " (" << rule << ')';
    if (!cond) s << " FAILED";
    notes.push_back(s.str());
    ok = ok && cond;
  }
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }
};

double num(const json& m, const char* k) { return m.at(k).get<double>(); }

using Rule = std::function<void(const json& measured, Verdict& v)>;

const std::map<int, Rule>& rules() {
  static const std::map<int, Rule> r = {
      {1,
       [](const json& m, Verdict& v) {
         v.need(num(m, "max_relative_error") < 1e-4, "max_rel_err", m["max_relative_error"], "< 1e-4");
         v.need(num(m, "samples") >= 200, "samples", m["samples"], ">= 200");
         v.need(num(m, "seconds") < 120, "seconds", m["seconds"], "< 120");
       }},
      {2,
       [](const json& m, Verdict& v) {
         for (const char* k : {"max_error_bi_dino", "max_error_bi_ibot", "max_error_uniformity"})
           v.need(num(m, k) <= 1e-9, k, m[k], "<= 1e-9");
         v.need(num(m, "cases") >= 50, "cases", m["cases"], ">= 50");
         v.need(num(m, "entropy_bound_violations") == 0, "ce_bound_violations", m["entropy_bound_violations"], "== 0");
         v.need(num(m, "onehot_vs_uniform") == std::log(256.0), "onehot_vs_uniform", m["onehot_vs_uniform"], "== log 256");
       }},
      {3,
       [](const json& m, Verdict& v) {
         v.need(num(m, "extra_band_max_diff") <= 1e-12, "zero_init", m["extra_band_max_diff"], "<= 1e-12");
         v.need(num(m, "lora_b0_max_diff") <= 1e-12, "lora_b0", m["lora_b0_max_diff"], "<= 1e-12");
         v.need(num(m, "ema_max_diff") <= 1e-10, "ema", m["ema_max_diff"], "<= 1e-10");
         v.need(num(m, "momentum") == 0.992, "m", m["momentum"], "== 0.992");
       }},
      {4,
       [](const json& m, Verdict& v) {
         v.need(num(m, "loss_trivial_zero") == 0.0 && num(m, "loss_trivial_one") == 1.0, "trivial_losses",
                json::array({m["loss_trivial_zero"], m["loss_trivial_one"]}), "== {0, 1}");
         v.need(num(m, "max_gradient_relative_error") < 1e-6, "grad_err", m["max_gradient_relative_error"], "< 1e-6");
         v.need(m.at("attenuation_monotone").get<bool>(), "attenuation_monotone", m["attenuation_monotone"], "true");
       }},
      {5,
       [](const json& m, Verdict& v) {
         v.need(num(m, "gap") >= 0.1, "gap", m["gap"], ">= 0.1");
         v.need(num(m, "held_out_pairs") == 200, "held_out_pairs", m["held_out_pairs"], "== 200");
         v.need(num(m, "steps") == 2000, "steps", m["steps"], "== 2000");
         v.need(num(m, "pretrain_seconds") <= 1200, "pretrain_s", m["pretrain_seconds"], "<= 1200");
       }},
      {6,
       [](const json& m, Verdict& v) {
         v.need(num(m, "model_r2") >= 0.6, "model_r2", m["model_r2"], ">= 0.6");
         v.need(num(m, "oracle_r2") >= 0.85, "oracle_r2", m["oracle_r2"], ">= 0.85");
         const auto means = m.at("fraction_means").get<std::vector<double>>();
         int inv = 0;
         double worst = 0;
         for (std::size_t i = 0; i + 1 < means.size(); ++i)
           if (means[i] > means[i + 1]) {
             ++inv;
             worst = std::max(worst, means[i] - means[i + 1]);
           }
         v.need(means.size() == 5 && (inv == 0 || (inv == 1 && worst <= 0.02)), "inversions",
                json::array({inv, Verdict::fmt(worst)}), "<= 1 of <= 0.02 over 5 fractions");
       }},
      {7,
       [](const json& m, Verdict& v) {
         v.need(num(m, "overlaps") == 0, "overlaps", m["overlaps"], "== 0");
         v.need(num(m, "splits_audited") == 5 * 5 * 3 * 2, "splits", m["splits_audited"], "== 5 scenarios x 5 folds x 3 countries x 2 years");
         v.need(num(m, "coverage_errors") == 0, "coverage_errors", m["coverage_errors"], "== 0");
         v.need(num(m, "fold_rule_errors") == 0, "fold_rule_errors", m["fold_rule_errors"], "== 0");
       }},
      {8,
       [](const json& m, Verdict& v) {
         v.need(num(m, "max_error_r2") <= 1e-12, "r2_err", m["max_error_r2"], "<= 1e-12");
         v.need(num(m, "max_error_pearson_r2") <= 1e-12, "pearson_err", m["max_error_pearson_r2"], "<= 1e-12");
         v.need(num(m, "vectors") >= 100, "vectors", m["vectors"], ">= 100");
         v.need(num(m, "max_affine_change") <= 1e-12, "affine", m["max_affine_change"], "<= 1e-12");
         v.need(std::fabs(num(m, "r2_half_case") - 0.5) <= 1e-12, "r2_half", m["r2_half_case"], "== 0.5");
       }},
      {9,
       [](const json& m, Verdict& v) {
         std::set<std::pair<int, int>> seen;
         bool identical = true;
         for (const auto& c : m.at("configurations")) {
           seen.insert({c.at("acquisition").get<int>(), c.at("inference").get<int>()});
           identical = identical && c.at("identical").get<bool>();
         }
         const bool covered = seen.count({1, 1}) && seen.count({4, 2}) && seen.count({8, 8});
         v.need(identical && covered, "bytes_identical", identical && covered, "(1,1) (4,2) (8,8)");
         v.need(num(m, "ensemble_mean_max_diff") <= 1e-7, "ensemble_vs_serial", m["ensemble_mean_max_diff"], "<= 1e-7");
         v.need(num(m, "models") == 5, "models", m["models"], "== 5");
         v.need(m.at("mask_boundary_ok").get<bool>(), "mask_boundary", m["mask_boundary_ok"], "1.0 masked, 1.0+eps not");
       }},
      {10,
       [](const json& m, Verdict& v) {
         v.need(num(m, "theil_additivity_max_error") <= 1e-12, "additivity", m["theil_additivity_max_error"], "<= 1e-12");
         v.need(std::fabs(num(m, "theil_1_3") - 0.1308) < 5e-5, "theil_1_3", m["theil_1_3"], "~0.1308");
         const double b = num(m, "beta_hat");
         v.need(b >= -0.024 && b <= -0.018, "beta_hat", m["beta_hat"], "in [-0.024, -0.018]");
         const double s = num(m, "country_share");
         v.need(s >= 0.28 && s <= 0.38, "country_share", m["country_share"], "in [0.28, 0.38]");
       }},
      {11,
       [](const json& m, Verdict& v) {
         v.need(m.at("stages_ok").get<bool>(), "stages_ok", m["stages_ok"], "synth..analyze");
         v.need(num(m, "runtime_seconds") <= 45 * 60, "runtime_s", m["runtime_seconds"], "<= 2700");
         v.need(m.at("other_criteria_passed").get<bool>(), "criteria_1_10", m["other_criteria_passed"], "all pass");
       }},
  };
  return r;
}

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy-preset acceptance run"};
  std::string out, report_path, tempov = TEMPOV_CLI_PATH, schema = TEMPOV_SCHEMA_PATH, validator = TEMPOV_VALIDATOR_PATH;
  std::string python = "python3";
  app.add_option("--out", out, "Bench output directory")->required();
  app.add_option("--report", report_path, "Check an existing report instead of running the bench");
  app.add_option("--tempov", tempov);
  app.add_option("--python", python);
  std::vector<int> known_red;
  app.add_option("--known-red", known_red, "Criteria whose failure is documented; they still print FAIL")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  if (report_path.empty()) {
    fs::remove_all(out);
    const int code = run(tempov + " --log " + (fs::path(out).parent_path() / "acceptance_progress.jsonl").string() +
                         " bench --preset toy --out " + out + " > /dev/null");
    std::cout << "bench exit code " << code << '\n';
    report_path = (fs::path(out) / "bench_report.json").string();
  }
  std::ifstream f(report_path);
  if (!f) {
    std::cout << "no report at " << report_path << '\n';
    for (int id = 1; id <= 11; ++id) std::cout << "criterion " << id << " FAIL (no report)\n";
    return 1;
  }
  const json report = json::parse(f);

  bool all = true;
  std::vector<int> failed;
  std::map<int, json> by_id;
  for (const auto& c : report.at("criteria")) by_id[c.at("id").get<int>()] = c;
  for (int id = 1; id <= 11; ++id) {
    Verdict v;
    std::string name = "missing";
    if (!by_id.count(id)) {
      v.ok = false;
      v.notes.push_back("not in report");
    } else {
      const auto& c = by_id[id];
      name = c.at("name");
      try {
        rules().at(id)(c.at("measured"), v);
      } catch (const std::exception& e) {
        v.ok = false;
        v.notes.push_back(std::string("measurement missing: ") + e.what());
      }
      if (c.at("passed").get<bool>() != v.ok) v.notes.push_back("report verdict disagrees");
      v.ok = v.ok && c.at("passed").get<bool>();
      if (c.contains("detail")) v.notes.push_back("detail: " + c.at("detail").get<std::string>());
    }
    if (id == 11) {
      const int schema_ok = run(python + " " + validator + " " + schema + " " + report_path + " > /dev/null 2>&1");
      v.need(schema_ok == 0, "schema_valid", schema_ok == 0, "bench_report.schema.json");
    }
    all = all && v.ok;
    const bool known = std::find(known_red.begin(), known_red.end(), id) != known_red.end();
    if (!v.ok) failed.push_back(id);
    if (known) v.notes.push_back(v.ok ? "listed as known red but passed" : "known red");
    std::cout << "criterion " << (id < 10 ? " " : "") << id << ' ' << (v.ok ? "PASS" : "FAIL") << "  " << name << ": ";
    for (std::size_t i = 0; i < v.notes.size(); ++i) std::cout << (i ? ", " : "") << v.notes[i];
    std::cout << '\n';
  }
  if (all) {
    std::cout << "acceptance: all criteria pass" << std::endl;
    return 0;
  }
  bool only_known = true;
  std::cout << "acceptance: FAILED criteria";
  for (int id : failed) {
    std::cout << ' ' << id;
    only_known = only_known && std::find(known_red.begin(), known_red.end(), id) != known_red.end();
  }
  std::cout << (only_known && !known_red.empty() ? " (all listed as known red)" : "") << std::endl;
  return only_known && !known_red.empty() ? 0 : 1;
}
