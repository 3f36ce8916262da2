#include "tempov/cli/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>

#include "tempov/backbone/serialize.hpp"
#include "tempov/core/error.hpp"
#include "tempov/eval/metrics.hpp"

#ifndef TEMPOV_VERSION
#define TEMPOV_VERSION "0.0.0"
#endif

namespace tempov::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int Dataset::epoch_of(int year) const { return data::epoch_of_year(world.config, year); }

const data::ImageTile& Dataset::tile_for(const data::SurveyRecord& r) const {
  return composite(world.grid.locate(r.lon, r.lat), epoch_of(r.year));
}

Dataset make_dataset(data::World world) {
  Dataset ds;
  ds.world = std::move(world);
  const int n = ds.world.grid.num_cells();
  ds.composites.reserve(static_cast<std::size_t>(n) * 2);
  for (int c = 0; c < n; ++c)
    for (int e = 0; e < 2; ++e) ds.composites.push_back(data::cell_composite(ds.world, c, e));
  return ds;
}

std::string cluster_key(const data::SurveyRecord& r) {
  return r.country_code + "|" + std::to_string(r.year) + "|" + r.cluster_id;
}

std::vector<adapt::LabeledSample> samples_of(const Dataset& ds, std::span<const int> idx) {
  std::vector<adapt::LabeledSample> out;
  out.reserve(idx.size());
  for (int i : idx) {
    const auto& r = ds.world.surveys.at(i);
    out.push_back({&ds.tile_for(r), r.awi, r.country_code, r.lon, r.lat});
  }
  return out;
}

PairSplit split_pairs(const std::vector<data::BitemporalPair>& pairs) {
  std::map<std::string, int> order;
  for (const auto& p : pairs) order.emplace(p.tile_t1.location_id, 0);
  int k = 0;
  for (auto& [loc, i] : order) i = k++;
  PairSplit s;
  for (const auto& p : pairs) (order[p.tile_t1.location_id] % 3 == 2 ? s.held : s.train).push_back(p);
  return s;
}

InvarianceGap invariance_gap(const backbone::Encoder<float>& enc, std::span<const data::BitemporalPair> pairs) {
  const int n = static_cast<int>(pairs.size());
  if (n < 2) throw InputError("invariance gap needs at least 2 pairs");
  std::vector<std::vector<double>> a(n), b(n);
  auto unit = [](const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    const double inv = s > 0 ? 1.0 / std::sqrt(s) : 0.0;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
    return out;
  };
  for (int i = 0; i < n; ++i) {
    a[i] = unit(enc.encode(pairs[i].tile_t1).global_embedding);
    b[i] = unit(enc.encode(pairs[i].tile_t2).global_embedding);
  }
  auto dot = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
  };
  InvarianceGap g;
  g.n = n;
  long cross_n = 0;
  for (int i = 0; i < n; ++i) {
    g.within += dot(a[i], b[i]);
    for (int j = 0; j < n; ++j) {
      if (pairs[i].tile_t1.location_id == pairs[j].tile_t1.location_id) continue;
      g.cross += dot(a[i], b[j]);
      ++cross_n;
    }
  }
  g.within /= n;
  g.cross /= std::max(cross_n, 1L);
  g.gap = g.within - g.cross;
  return g;
}

data::NormStats norm_stats_of(const data::World& world) {
  std::vector<const data::ImageTile*> ptrs;
  for (const auto& t : world.tiles) ptrs.push_back(&t);
  return data::compute_norm_stats(ptrs);
}

Checkpoint pretrained_checkpoint(const pretrain::Pretrainer<float>& trainer) {
  Checkpoint ck;
  ck.manifest["format"] = "tempov-checkpoint";
  ck.manifest["kind"] = "pretrained";
  ck.manifest["pretrain_config"] = trainer.config();
  ck.manifest["step"] = trainer.state().step;
  const auto& teacher = trainer.state().teacher;
  backbone::store_encoder(ck, teacher.encoder);
  backbone::store_projection_head(ck, "dino_head", teacher.dino);
  backbone::store_projection_head(ck, "ibot_head", teacher.ibot);
  return ck;
}

StageSelection select_stages(const std::vector<data::SurveyRecord>& recs, const adapt::AdaptationPlan& plan,
                             std::optional<int> test_fold, std::optional<int> val_fold) {
  auto matches = [](const adapt::StageSpec& spec, const data::SurveyRecord& r) {
    const bool country = spec.countries.empty() ||
                         std::find(spec.countries.begin(), spec.countries.end(), r.country_code) != spec.countries.end();
    const bool year = spec.years.empty() || std::find(spec.years.begin(), spec.years.end(), r.year) != spec.years.end();
    return country && year;
  };
  const adapt::StageSpec& last = plan.stage2 ? *plan.stage2 : plan.stage1;
  StageSelection s;
  for (int i = 0; i < static_cast<int>(recs.size()); ++i) {
    const auto& r = recs[i];
    if ((test_fold || val_fold) && r.fold_id < 0) throw ConfigError("fold-based selection needs fold ids");
    if (test_fold && r.fold_id == *test_fold && matches(last, r)) {
      s.test.push_back(i);
    } else if (plan.stage2 && matches(*plan.stage2, r)) {
      (val_fold && r.fold_id == *val_fold ? s.val2 : s.train2).push_back(i);
    } else if (matches(plan.stage1, r)) {
      // Stage 1 of a two-stage plan keeps all its labels and splits by block.
      (!plan.stage2 && val_fold && r.fold_id == *val_fold ? s.val1 : s.train1).push_back(i);
    }
  }
  return s;
}

double oracle_r2(const data::World& world, std::span<const int> train, std::span<const int> test) {
  std::map<std::pair<std::string, int>, double> built;
  for (const auto& t : world.truth) built[{t.cluster_id, t.year}] = t.built_mean;
  auto xy = [&](int i) {
    const auto& r = world.surveys.at(i);
    return std::pair{built.at({r.cluster_id, r.year}), r.awi};
  };
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i : train) {
    const auto [x, y] = xy(i);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(train.size());
  const double slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
  const double icpt = (sy - slope * sx) / n;
  std::vector<double> y, yhat;
  for (int i : test) {
    const auto [x, v] = xy(i);
    y.push_back(v);
    yhat.push_back(icpt + slope * x);
  }
  return eval::r_squared(y, yhat);
}

double model_r2(const adapt::WealthModel<float>& model, const std::vector<adapt::LabeledSample>& samples) {
  std::vector<double> y, yhat;
  for (const auto& s : samples) {
    y.push_back(s.y);
    yhat.push_back(model.predict(*s.tile).mean);
  }
  return eval::r_squared(y, yhat);
}

std::string code_version() { return TEMPOV_VERSION; }

std::string utc_timestamp(bool compact) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), compact ? "%Y%m%dT%H%M%SZ" : "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunManifest::RunManifest(std::string command, json config, std::uint64_t seed)
    : command_(std::move(command)), config_(std::move(config)), seed_(seed), started_(utc_timestamp()) {}

void RunManifest::add_output(const fs::path& p) { outputs_.push_back(p.string()); }

fs::path RunManifest::write(const fs::path& out_dir) {
  const std::string base = utc_timestamp(true) + "_" + command_;
  fs::path dir = out_dir / "runs" / base;
  for (int i = 2; fs::exists(dir); ++i) dir = out_dir / "runs" / (base + "_" + std::to_string(i));
  fs::create_directories(dir);
  const json j{{"command", command_},     {"config", config_},           {"config_hash", config_hash(config_)},
               {"code_version", code_version()}, {"seed", seed_},        {"started_at", started_},
               {"finished_at", utc_timestamp()}, {"outputs", outputs_}};
  std::ofstream f(dir / "manifest.json");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("cannot write run manifest under " + dir.string());
  return dir / "manifest.json";
}

}  // namespace tempov::cli
