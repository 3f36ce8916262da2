#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/data/survey.hpp"

namespace tempov::eval {

enum class Scenario {
  out_of_country = 1,
  in_country_out_of_year = 2,
  in_country_in_year = 3,
  all_countries_out_of_year = 4,
  all_countries_in_year = 5,
};

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);  // name or "1".."5"

struct ScenarioSpec {
  Scenario scenario = Scenario::in_country_in_year;
  std::string country;  // A
  int year = 0;         // T1; T2 is every other year
  int fold = 0;         // i
  int k = 5;
  std::uint64_t seed = 0;  // country split of scenario (1)
};

// Indices into the record vector. Records must carry fold ids.
struct ScenarioSplit {
  std::vector<int> train, val, test;
};

// Throws ProtocolError if any two of train/val/test share a cluster.
ScenarioSplit make_scenario(const ScenarioSpec& spec, const std::vector<data::SurveyRecord>& records);

struct LeakageReport {
  int instances = 0;
  int overlaps = 0;
  std::vector<std::string> findings;
};

// Exhaustive pairwise set-intersection check of one split.
LeakageReport audit_split(const ScenarioSplit& split, const std::vector<data::SurveyRecord>& records);

// Every scenario × fold × target country of the records.
LeakageReport audit_all(const std::vector<data::SurveyRecord>& records, int year, int k, std::uint64_t seed);

}  // namespace tempov::eval
