#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/data/survey.hpp"
#include "tempov/eval/scenario.hpp"

namespace tempov::eval {

struct PredictedCluster {
  data::SurveyRecord record;
  double prediction = 0;
  double variance = 0;
};

// Metrics are empty when undefined on a fold (e.g. constant labels).
struct FoldMetrics {
  int fold = 0;
  int n = 0;
  std::optional<double> r2;
  std::optional<double> pearson_r2;
};

struct Summary {
  double mean = 0;
  double sd = 0;  // sample sd across folds; 0 for a single fold
  int folds = 0;
};

struct ChangeMetrics {
  int year_from = 0;
  int year_to = 0;
  int n = 0;         // clusters present in both epochs
  int excluded = 0;  // clusters seen in only one of them
  std::optional<double> r2;
  std::optional<double> pearson_r2;
};

struct MetricReport {
  std::string scenario;
  std::string country;
  int year = 0;
  int k = 0;
  int n = 0;
  std::vector<FoldMetrics> folds;
  Summary r2;
  Summary pearson_r2;
  std::optional<ChangeMetrics> change;
};

// Change metrics compare pred(t2) − pred(t1) with awi(t2) − awi(t1) over
// clusters (matched by country and cluster id) observed in both years.
ChangeMetrics change_metrics(const std::vector<PredictedCluster>& pool, int year_from, int year_to);

// `per_fold[i]` holds the test predictions of fold i. Throws InputError when
// every fold is empty.
MetricReport evaluate(const ScenarioSpec& spec, const std::vector<std::vector<PredictedCluster>>& per_fold,
                      const std::vector<PredictedCluster>* change_pool = nullptr);

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

}  // namespace tempov::eval
