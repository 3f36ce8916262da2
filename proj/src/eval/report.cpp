#include "tempov/eval/report.hpp"

#include <cmath>
#include <map>

#include "tempov/core/error.hpp"
#include "tempov/eval/metrics.hpp"

namespace tempov::eval {

using nlohmann::json;

namespace {

struct Pair {
  std::optional<double> r2, pr2;
};

Pair safe_metrics(const std::vector<double>& y, const std::vector<double>& yhat) {
  Pair p;
  try {
    p.r2 = r_squared(y, yhat);
  } catch (const MetricError&) {
  }
  try {
    p.pr2 = pearson_r2(y, yhat);
  } catch (const MetricError&) {
  }
  return p;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.folds = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (v.size() - 1));
  }
  return s;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

ChangeMetrics change_metrics(const std::vector<PredictedCluster>& pool, int year_from, int year_to) {
  ChangeMetrics c;
  c.year_from = year_from;
  c.year_to = year_to;
  using Key = std::pair<std::string, std::string>;
  std::map<Key, const PredictedCluster*> a, b;
  for (const auto& p : pool) {
    const Key key{p.record.country_code, p.record.cluster_id};
    if (p.record.year == year_from) a[key] = &p;
    if (p.record.year == year_to) b[key] = &p;
  }
  std::vector<double> dy, dp;
  for (const auto& [key, pa] : a) {
    const auto it = b.find(key);
    if (it == b.end()) {
      ++c.excluded;
      continue;
    }
    dy.push_back(it->second->record.awi - pa->record.awi);
    dp.push_back(it->second->prediction - pa->prediction);
  }
  for (const auto& [key, pb] : b) c.excluded += a.count(key) == 0;
  c.n = static_cast<int>(dy.size());
  const Pair m = safe_metrics(dy, dp);
  c.r2 = m.r2;
  c.pearson_r2 = m.pr2;
  return c;
}

MetricReport evaluate(const ScenarioSpec& spec, const std::vector<std::vector<PredictedCluster>>& per_fold,
                      const std::vector<PredictedCluster>* change_pool) {
  MetricReport r;
  r.scenario = scenario_name(spec.scenario);
  r.country = spec.country;
  r.year = spec.year;
  r.k = spec.k;
  std::vector<double> r2s, pr2s;
  for (std::size_t i = 0; i < per_fold.size(); ++i) {
    if (per_fold[i].empty()) continue;
    std::vector<double> y, yhat;
    for (const auto& p : per_fold[i]) {
      y.push_back(p.record.awi);
      yhat.push_back(p.prediction);
    }
    const Pair m = safe_metrics(y, yhat);
    r.folds.push_back({static_cast<int>(i), static_cast<int>(y.size()), m.r2, m.pr2});
    r.n += static_cast<int>(y.size());
    if (m.r2) r2s.push_back(*m.r2);
    if (m.pr2) pr2s.push_back(*m.pr2);
  }
  if (r.folds.empty()) throw InputError("evaluation has an empty test set");
  r.r2 = summarize(r2s);
  r.pearson_r2 = summarize(pr2s);
  if (change_pool) {
    int lo = spec.year, hi = spec.year;
    for (const auto& p : *change_pool) {
      lo = std::min(lo, p.record.year);
      hi = std::max(hi, p.record.year);
    }
    if (lo != hi) r.change = change_metrics(*change_pool, lo, hi);
  }
  return r;
}

json to_json(const MetricReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold}, {"n", f.n}, {"r2", opt(f.r2)}, {"pearson_r2", opt(f.pearson_r2)}});
  }
  auto summary = [](const Summary& s) { return json{{"mean", s.mean}, {"sd", s.sd}, {"folds", s.folds}}; };
  json j{{"scenario", r.scenario}, {"country", r.country},          {"year", r.year},
         {"k", r.k},               {"n", r.n},                      {"folds", folds},
         {"r2", summary(r.r2)},    {"pearson_r2", summary(r.pearson_r2)}};
  if (r.change) {
    j["change"] = {{"year_from", r.change->year_from}, {"year_to", r.change->year_to},
                   {"n", r.change->n},                 {"excluded", r.change->excluded},
                   {"r2", opt(r.change->r2)},          {"pearson_r2", opt(r.change->pearson_r2)}};
  } else {
    j["change"] = nullptr;
  }
  return j;
}

MetricReport metric_report_from_json(const json& j) {
  MetricReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.country = j.at("country").get<std::string>();
  r.year = j.at("year").get<int>();
  r.k = j.at("k").get<int>();
  r.n = j.at("n").get<int>();
  for (const auto& f : j.at("folds")) {
    r.folds.push_back({f.at("fold").get<int>(), f.at("n").get<int>(), opt_from(f.at("r2")), opt_from(f.at("pearson_r2"))});
  }
  auto summary = [](const json& s) {
    return Summary{s.at("mean").get<double>(), s.at("sd").get<double>(), s.at("folds").get<int>()};
  };
  r.r2 = summary(j.at("r2"));
  r.pearson_r2 = summary(j.at("pearson_r2"));
  if (!j.at("change").is_null()) {
    const json& c = j.at("change");
    r.change = ChangeMetrics{c.at("year_from").get<int>(), c.at("year_to").get<int>(), c.at("n").get<int>(),
                             c.at("excluded").get<int>(),  opt_from(c.at("r2")),       opt_from(c.at("pearson_r2"))};
  }
  return r;
}

}  // namespace tempov::eval
