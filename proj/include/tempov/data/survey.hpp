#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tempov/core/rng.hpp"

namespace tempov::data {

struct SurveyRecord {
  std::string cluster_id;
  std::string country_code;
  int year = 0;
  double lon = 0.0;
  double lat = 0.0;
  double awi = 0.0;
  bool urban = false;
  int fold_id = -1;  // -1 until folds are assigned

  friend bool operator==(const SurveyRecord&, const SurveyRecord&) = default;
};

inline constexpr double kRuralJitterKm = 2.0;
inline constexpr double kUrbanJitterKm = 5.0;

// Uniform displacement over the disk of the record's class radius. The
// original coordinates are not kept anywhere in the returned record.
SurveyRecord apply_jitter(const SurveyRecord& record, Rng& rng);

// CSV with header cluster_id,country_code,year,lon,lat,awi,urban_flag,fold_id.
// Floats are written in shortest round-trip form, so write→read is bit-exact.
void write_surveys(const std::filesystem::path& path, const std::vector<SurveyRecord>& records);
std::vector<SurveyRecord> read_surveys(const std::filesystem::path& path);

}  // namespace tempov::data
