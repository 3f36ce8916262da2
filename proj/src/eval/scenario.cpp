#include "tempov/eval/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tempov/core/error.hpp"
#include "tempov/core/rng.hpp"
#include "tempov/eval/folds.hpp"

namespace tempov::eval {

namespace {
constexpr const char* kNames[] = {"out-of-country", "in-country-out-of-year", "in-country-in-year",
                                  "all-countries-out-of-year", "all-countries-in-year"};
}

std::string scenario_name(Scenario s) { return kNames[static_cast<int>(s) - 1]; }

Scenario parse_scenario(const std::string& name) {
  std::string dashed = name;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  for (int i = 0; i < 5; ++i)
    if (dashed == kNames[i] || name == std::to_string(i + 1)) return static_cast<Scenario>(i + 1);
  throw ConfigError("unknown scenario '" + name + "'");
}

ScenarioSplit make_scenario(const ScenarioSpec& spec, const std::vector<data::SurveyRecord>& records) {
  const int k = spec.k;
  if (k < 2) throw ConfigError("k must be >= 2");
  if (spec.fold < 0 || spec.fold >= k) throw ConfigError("fold index must lie in [0, k)");
  const int i = spec.fold;
  const int next = (i + 1) % k;

  std::set<std::string> others;
  bool has_target = false;
  for (const auto& r : records) {
    if (r.country_code == spec.country) {
      has_target = true;
    } else {
      others.insert(r.country_code);
    }
    if (r.fold_id < 0 || r.fold_id >= k) throw ProtocolError("record " + r.cluster_id + " has no valid fold id");
  }
  if (!has_target) throw DataError("no records for target country " + spec.country);

  ScenarioSplit s;
  auto A = [&](const data::SurveyRecord& r) { return r.country_code == spec.country; };
  auto T1 = [&](const data::SurveyRecord& r) { return r.year == spec.year; };

  if (spec.scenario == Scenario::out_of_country) {
    if (others.size() < 2) throw DataError("out-of-country scenario needs at least 2 other countries");
    std::vector<std::string> b(others.begin(), others.end());
    Rng rng = make_rng(spec.seed, {0xb5});
    std::shuffle(b.begin(), b.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * b.size())));
    const std::set<std::string> val(b.begin(), b.begin() + n_val);
    for (int idx = 0; idx < static_cast<int>(records.size()); ++idx) {
      const auto& r = records[idx];
      if (A(r)) {
        s.test.push_back(idx);
      } else {
        (val.count(r.country_code) ? s.val : s.train).push_back(idx);
      }
    }
  } else {
    const bool with_B = spec.scenario == Scenario::all_countries_out_of_year ||
                        spec.scenario == Scenario::all_countries_in_year;
    const bool out_of_year = spec.scenario == Scenario::in_country_out_of_year ||
                             spec.scenario == Scenario::all_countries_out_of_year;
    for (int idx = 0; idx < static_cast<int>(records.size()); ++idx) {
      const auto& r = records[idx];
      if (!A(r)) {
        if (with_B) s.train.push_back(idx);
        continue;
      }
      const int f = r.fold_id;
      if (out_of_year) {
        // Train on four folds of A@T2, validate on its fold i, test on fold i of A@T1.
        if (T1(r)) {
          if (f == i) s.test.push_back(idx);
        } else {
          (f == i ? s.val : s.train).push_back(idx);
        }
      } else {
        // Train on A@T2 plus three folds of A@T1; validate on fold i, test on fold (i+1) mod k.
        if (!T1(r)) {
          s.train.push_back(idx);
        } else if (f == i) {
          s.val.push_back(idx);
        } else if (f == next) {
          s.test.push_back(idx);
        } else {
          s.train.push_back(idx);
        }
      }
    }
  }
  const auto audit = audit_split(s, records);
  if (audit.overlaps > 0) throw ProtocolError("scenario split leaks: " + audit.findings.front());
  return s;
}

LeakageReport audit_split(const ScenarioSplit& split, const std::vector<data::SurveyRecord>& records) {
  LeakageReport rep;
  rep.instances = 1;
  auto keys = [&](const std::vector<int>& idx) {
    std::set<ClusterKey> out;
    for (int i : idx) out.insert(key_of(records.at(i)));
    return out;
  };
  const std::set<ClusterKey> tr = keys(split.train), va = keys(split.val), te = keys(split.test);
  auto check = [&](const std::set<ClusterKey>& a, const std::set<ClusterKey>& b, const char* what) {
    for (const auto& key : a) {
      if (b.count(key)) {
        ++rep.overlaps;
        rep.findings.push_back(std::string(what) + ": " + std::get<0>(key) + "/" + std::to_string(std::get<1>(key)) +
                               "/" + std::get<2>(key));
      }
    }
  };
  check(tr, va, "train∩val");
  check(tr, te, "train∩test");
  check(va, te, "val∩test");
  return rep;
}

LeakageReport audit_all(const std::vector<data::SurveyRecord>& records, int year, int k, std::uint64_t seed) {
  std::set<std::string> countries;
  for (const auto& r : records) countries.insert(r.country_code);
  LeakageReport total;
  for (const auto& c : countries)
    for (int sc = 1; sc <= 5; ++sc)
      for (int i = 0; i < k; ++i) {
        ScenarioSpec spec{static_cast<Scenario>(sc), c, year, i, k, seed};
        ScenarioSplit split;
        try {
          split = make_scenario(spec, records);
        } catch (const ProtocolError& e) {
          ++total.instances;
          ++total.overlaps;
          total.findings.push_back(e.what());
          continue;
        }
        const auto rep = audit_split(split, records);
        total.instances += rep.instances;
        total.overlaps += rep.overlaps;
        total.findings.insert(total.findings.end(), rep.findings.begin(), rep.findings.end());
      }
  return total;
}

}  // namespace tempov::eval
