#include "tempov/data/survey.hpp"

#include <cmath>
#include <fstream>

#include "tempov/core/error.hpp"
#include "tempov/data/geo.hpp"
#include "tempov/data/io.hpp"

namespace tempov::data {

namespace {
constexpr const char* kHeader = "cluster_id,country_code,year,lon,lat,awi,urban_flag,fold_id";
}

SurveyRecord apply_jitter(const SurveyRecord& record, Rng& rng) {
  const double radius = record.urban ? kUrbanJitterKm : kRuralJitterKm;
  const double r = radius * std::sqrt(uniform01(rng));
  const double theta = 2.0 * M_PI * uniform01(rng);
  SurveyRecord out = record;
  const double dlat = km_to_deg(r * std::sin(theta));
  out.lat = record.lat + dlat;
  // Longitude scaled at the mid latitude so distance_km() recovers r.
  const double mid = (record.lat + 0.5 * dlat) * M_PI / 180.0;
  out.lon = record.lon + km_to_deg(r * std::cos(theta)) / std::cos(mid);
  return out;
}

void write_surveys(const std::filesystem::path& path, const std::vector<SurveyRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kHeader << '\n';
  for (const auto& r : records) {
    if (r.cluster_id.find_first_of(",\"\n") != std::string::npos) {
      throw InputError("cluster id '" + r.cluster_id + "' contains CSV metacharacters");
    }
    out << r.cluster_id << ',' << r.country_code << ',' << r.year << ',' << format_double(r.lon) << ','
        << format_double(r.lat) << ',' << format_double(r.awi) << ',' << (r.urban ? 1 : 0) << ',' << r.fold_id
        << '\n';
  }
}

std::vector<SurveyRecord> read_surveys(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kHeader)) {
    throw DataError(path.string() + ": expected header " + kHeader);
  }
  std::vector<SurveyRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      SurveyRecord r;
      r.cluster_id = f[0];
      r.country_code = f[1];
      r.year = std::stoi(f[2]);
      r.lon = parse_double(f[3]);
      r.lat = parse_double(f[4]);
      r.awi = parse_double(f[5]);
      r.urban = f[6] == "1" || f[6] == "true";
      r.fold_id = f[7].empty() ? -1 : std::stoi(f[7]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tempov::data
