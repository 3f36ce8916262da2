#include "tempov/data/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tempov/core/error.hpp"
#include "tempov/data/geo.hpp"
#include "tempov/data/io.hpp"
#include "tempov/data/pairs.hpp"

namespace tempov::data {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticWorldConfig::validate() const {
  if (num_countries < 1 || num_countries > 26) throw ConfigError("num_countries must lie in [1, 26]");
  if (cells_per_side < 2) throw ConfigError("cells_per_side must be >= 2");
  if (!(cell_km > 0)) throw ConfigError("cell_km must be > 0");
  if (tile_size < 8) throw ConfigError("tile_size must be >= 8");
  if (seasons < 2) throw ConfigError("at least 2 seasons are needed to form pairs");
  if (years[0] == years[1]) throw ConfigError("the two epochs need distinct years");
  for (double a : seasonal_amplitude)
    if (a < 0) throw ConfigError("seasonal amplitudes must be >= 0");
  if (pixel_noise < 0 || wealth_noise < 0) throw ConfigError("noise levels must be >= 0");
  if (urban_seeds < 1) throw ConfigError("urban_seeds must be >= 1");
  if (!(seed_radius_min_km > 0 && seed_radius_min_km <= seed_radius_max_km)) {
    throw ConfigError("need 0 < seed_radius_min_km <= seed_radius_max_km");
  }
  if (!(correlation_km > 0 && change_correlation_km > 0 && land_cover_km > 0)) {
    throw ConfigError("correlation lengths must be > 0");
  }
  if (land_cover_amplitude < 0) throw ConfigError("land_cover_amplitude must be >= 0");
  if (clusters_per_country < 1 || clusters_per_country > cells_per_side * cells_per_side) {
    throw ConfigError("clusters_per_country must lie in [1, cells per country]");
  }
}

void to_json(json& j, const SyntheticWorldConfig& c) {
  j = json{{"num_countries", c.num_countries},
           {"cells_per_side", c.cells_per_side},
           {"cell_km", c.cell_km},
           {"tile_size", c.tile_size},
           {"seasons", c.seasons},
           {"years", c.years},
           {"origin_lon", c.origin_lon},
           {"origin_lat", c.origin_lat},
           {"urban_seeds", c.urban_seeds},
           {"seed_radius_min_km", c.seed_radius_min_km},
           {"seed_radius_max_km", c.seed_radius_max_km},
           {"correlation_km", c.correlation_km},
           {"background_amplitude", c.background_amplitude},
           {"seasonal_amplitude", c.seasonal_amplitude},
           {"pixel_noise", c.pixel_noise},
           {"wealth_slope", c.wealth_slope},
           {"wealth_intercept", c.wealth_intercept},
           {"wealth_noise", c.wealth_noise},
           {"epoch2_slope_scale", c.epoch2_slope_scale},
           {"epoch2_shift", c.epoch2_shift},
           {"change_magnitude", c.change_magnitude},
           {"change_correlation_km", c.change_correlation_km},
           {"land_cover_km", c.land_cover_km},
           {"land_cover_amplitude", c.land_cover_amplitude},
           {"clusters_per_country", c.clusters_per_country},
           {"jitter", c.jitter},
           {"seed", c.seed}};
}

void from_json(const json& j, SyntheticWorldConfig& c) {
  const SyntheticWorldConfig d;
  c.num_countries = j.value("num_countries", d.num_countries);
  c.cells_per_side = j.value("cells_per_side", d.cells_per_side);
  c.cell_km = j.value("cell_km", d.cell_km);
  c.tile_size = j.value("tile_size", d.tile_size);
  c.seasons = j.value("seasons", d.seasons);
  c.years = j.value("years", d.years);
  c.origin_lon = j.value("origin_lon", d.origin_lon);
  c.origin_lat = j.value("origin_lat", d.origin_lat);
  c.urban_seeds = j.value("urban_seeds", d.urban_seeds);
  c.seed_radius_min_km = j.value("seed_radius_min_km", d.seed_radius_min_km);
  c.seed_radius_max_km = j.value("seed_radius_max_km", d.seed_radius_max_km);
  c.correlation_km = j.value("correlation_km", d.correlation_km);
  c.background_amplitude = j.value("background_amplitude", d.background_amplitude);
  c.seasonal_amplitude = j.value("seasonal_amplitude", d.seasonal_amplitude);
  c.pixel_noise = j.value("pixel_noise", d.pixel_noise);
  c.wealth_slope = j.value("wealth_slope", d.wealth_slope);
  c.wealth_intercept = j.value("wealth_intercept", d.wealth_intercept);
  c.wealth_noise = j.value("wealth_noise", d.wealth_noise);
  c.epoch2_slope_scale = j.value("epoch2_slope_scale", d.epoch2_slope_scale);
  c.epoch2_shift = j.value("epoch2_shift", d.epoch2_shift);
  c.change_magnitude = j.value("change_magnitude", d.change_magnitude);
  c.change_correlation_km = j.value("change_correlation_km", d.change_correlation_km);
  c.land_cover_km = j.value("land_cover_km", d.land_cover_km);
  c.land_cover_amplitude = j.value("land_cover_amplitude", d.land_cover_amplitude);
  c.clusters_per_country = j.value("clusters_per_country", d.clusters_per_country);
  c.jitter = j.value("jitter", d.jitter);
  c.seed = j.value("seed", d.seed);
}

double WorldGrid::cell_deg() const { return km_to_deg(cell_km); }
double WorldGrid::center_lon(int cell) const { return origin_lon + (cell % cols + 0.5) * cell_deg(); }
double WorldGrid::center_lat(int cell) const { return origin_lat - (cell / cols + 0.5) * cell_deg(); }
const std::string& WorldGrid::country_of(int cell) const { return country_codes.at((cell % cols) / cells_per_country); }

std::string WorldGrid::cell_name(int cell) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_r%02d_c%02d", country_of(cell).c_str(), cell / cols, cell % cols);
  return buf;
}

int WorldGrid::locate(double lon, double lat) const {
  const int c = std::clamp(static_cast<int>(std::floor((lon - origin_lon) / cell_deg())), 0, cols - 1);
  const int r = std::clamp(static_cast<int>(std::floor((origin_lat - lat) / cell_deg())), 0, rows - 1);
  return r * cols + c;
}

void to_json(json& j, const WorldGrid& g) {
  j = json{{"origin_lon", g.origin_lon}, {"origin_lat", g.origin_lat},       {"cell_km", g.cell_km},
           {"rows", g.rows},             {"cols", g.cols},                   {"cells_per_country", g.cells_per_country},
           {"country_codes", g.country_codes}};
}

void from_json(const json& j, WorldGrid& g) {
  g.origin_lon = j.at("origin_lon").get<double>();
  g.origin_lat = j.at("origin_lat").get<double>();
  g.cell_km = j.at("cell_km").get<double>();
  g.rows = j.at("rows").get<int>();
  g.cols = j.at("cols").get<int>();
  g.cells_per_country = j.at("cells_per_country").get<int>();
  g.country_codes = j.at("country_codes").get<std::vector<std::string>>();
}

const ImageTile& World::tile(int cell, int epoch, int season) const {
  return tiles.at((static_cast<std::size_t>(cell) * 2 + epoch) * config.seasons + season);
}

int epoch_of_year(const SyntheticWorldConfig& cfg, int year) {
  if (year == cfg.years[0]) return 0;
  if (year == cfg.years[1]) return 1;
  throw DataError("year " + std::to_string(year) + " is not one of the world's epochs");
}

namespace {

// Sum of random plane waves; unit variance, wavelength around `scale_km`.
class SmoothField {
 public:
  SmoothField(Rng& rng, double scale_km, int waves = 8) {
    for (int i = 0; i < waves; ++i) {
      const double k = 2 * M_PI / (scale_km * (0.7 + 0.6 * uniform01(rng)));
      const double dir = 2 * M_PI * uniform01(rng);
      waves_.push_back({k * std::cos(dir), k * std::sin(dir), 2 * M_PI * uniform01(rng)});
    }
    amp_ = std::sqrt(2.0 / waves);
  }
  double operator()(double x, double y) const {
    double s = 0;
    for (const auto& w : waves_) s += std::cos(w[0] * x + w[1] * y + w[2]);
    return amp_ * s;
  }

 private:
  std::vector<std::array<double, 3>> waves_;
  double amp_ = 1;
};

struct UrbanSeed {
  double x, y, radius, peak;
};

constexpr std::array<double, kNumBands> kBuilt{0.14, 0.15, 0.17, 0.19, 0.32, 0.29};
constexpr std::array<double, kNumBands> kVegetation{0.03, 0.07, 0.04, 0.38, 0.19, 0.09};
constexpr std::array<double, kNumBands> kSoil{0.11, 0.15, 0.21, 0.27, 0.36, 0.31};

double hash_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(derive_seed(seed, {a, b}) >> 11) * 0x1.0p-53;
}

std::string country_code(int k) { return std::string("X") + static_cast<char>('A' + k) + static_cast<char>('A' + k); }

}  // namespace

World generate_world(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  World w;
  w.config = cfg;
  w.grid.origin_lon = cfg.origin_lon;
  w.grid.origin_lat = cfg.origin_lat;
  w.grid.cell_km = cfg.cell_km;
  w.grid.rows = cfg.grid_rows();
  w.grid.cols = cfg.grid_cols();
  w.grid.cells_per_country = cfg.cells_per_side;
  for (int k = 0; k < cfg.num_countries; ++k) w.grid.country_codes.push_back(country_code(k));

  const double country_km = cfg.cells_per_side * cfg.cell_km;
  std::vector<std::vector<UrbanSeed>> seeds(cfg.num_countries), new_seeds(cfg.num_countries);
  for (int k = 0; k < cfg.num_countries; ++k) {
    Rng rng = make_rng(cfg.seed, {0x5eed, static_cast<std::uint64_t>(k)});
    auto draw = [&](double peak_lo, double peak_hi) {
      UrbanSeed s;
      s.x = k * country_km + country_km * (0.1 + 0.8 * uniform01(rng));
      s.y = country_km * (0.1 + 0.8 * uniform01(rng));
      s.radius = cfg.seed_radius_min_km + uniform01(rng) * (cfg.seed_radius_max_km - cfg.seed_radius_min_km);
      s.peak = peak_lo + uniform01(rng) * (peak_hi - peak_lo);
      return s;
    };
    for (int i = 0; i < cfg.urban_seeds; ++i) seeds[k].push_back(draw(0.6, 1.0));
    new_seeds[k].push_back(draw(0.4, 0.7));  // a town that appears in epoch 2
  }
  Rng field_rng = make_rng(cfg.seed, {0xf1e1d});
  const SmoothField background(field_rng, cfg.correlation_km);
  const SmoothField greenness(field_rng, cfg.correlation_km);
  const SmoothField phase(field_rng, 2 * cfg.correlation_km);
  const SmoothField change(field_rng, cfg.change_correlation_km);
  const SmoothField temperature(field_rng, 3 * cfg.correlation_km);
  const SmoothField land_cover(field_rng, cfg.land_cover_km, 16);

  auto built_field = [&](double x, double y, int epoch) {
    const int k = std::clamp(static_cast<int>(x / country_km), 0, cfg.num_countries - 1);
    double b = 0.08 + cfg.background_amplitude * background(x, y);
    for (const auto& s : seeds[k]) {
      const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y);
      b += s.peak * std::exp(-d2 / (2 * s.radius * s.radius));
    }
    b = std::clamp(b, 0.0, 1.0);
    if (epoch == 0) return b;
    double delta = cfg.change_magnitude * std::max(0.0, 0.5 + change(x, y));
    for (const auto& s : seeds[k]) {
      const double r = 2 * s.radius;
      const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y);
      delta += cfg.change_magnitude * std::exp(-d2 / (2 * r * r));
    }
    for (const auto& s : new_seeds[k]) {
      const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y);
      delta += s.peak * std::exp(-d2 / (2 * s.radius * s.radius));
    }
    return std::clamp(b + delta, 0.0, 1.0);
  };

  const int n_cells = w.grid.num_cells();
  const int ts = cfg.tile_size;
  const double px_km = cfg.cell_km / ts;
  const double px_deg = w.grid.cell_deg() / ts;
  w.built_mean[0].assign(n_cells, 0.0);
  w.built_mean[1].assign(n_cells, 0.0);
  w.tiles.reserve(static_cast<std::size_t>(n_cells) * 2 * cfg.seasons);
  std::vector<double> b(static_cast<std::size_t>(ts) * ts);
  for (int cell = 0; cell < n_cells; ++cell) {
    const int row = cell / w.grid.cols;
    const int col = cell % w.grid.cols;
    const double x0 = col * cfg.cell_km;
    const double y0 = row * cfg.cell_km;
    const double cx = x0 + 0.5 * cfg.cell_km, cy = y0 + 0.5 * cfg.cell_km;
    const double g0 = std::clamp(0.6 + 0.12 * greenness(cx, cy), 0.2, 0.95);
    const double phi = M_PI * phase(cx, cy);
    for (int e = 0; e < 2; ++e) {
      double sum_b = 0;
      for (int py = 0; py < ts; ++py)
        for (int px = 0; px < ts; ++px) {
          const double v = built_field(x0 + (px + 0.5) * px_km, y0 + (py + 0.5) * px_km, e);
          b[py * ts + px] = v;
          sum_b += v;
        }
      w.built_mean[e][cell] = sum_b / (ts * ts);
      for (int s = 0; s < cfg.seasons; ++s) {
        ImageTile t(ts, ts);
        t.location_id = w.grid.cell_name(cell);
        t.year = cfg.years[e];
        t.season = "s" + std::to_string(s);
        t.geo = {cfg.origin_lon + col * w.grid.cell_deg(), cfg.origin_lat - row * w.grid.cell_deg(), px_deg};
        Rng noise = make_rng(cfg.seed, {0x9015e, static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(e),
                                        static_cast<std::uint64_t>(s)});
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double season_angle = 2 * M_PI * s / cfg.seasons + phi;
        for (int py = 0; py < ts; ++py)
          for (int px = 0; px < ts; ++px) {
            const std::uint64_t pid = static_cast<std::uint64_t>(row * ts + py) * (w.grid.cols * ts) + col * ts + px;
            // Fixed per-pixel threshold: the built mask only grows between epochs.
            const bool built = b[py * ts + px] > hash_uniform(cfg.seed, 0xb1d, pid);
            const double material = 0.9 + 0.2 * hash_uniform(cfg.seed, 0x3a7, pid);
            for (int band = 0; band < kNumBands; ++band) {
              double v;
              if (built) {
                v = kBuilt[band] * material;
              } else {
                // Only the vegetated fraction follows the seasonal cycle.
                const double g = std::clamp(g0 + cfg.land_cover_amplitude * land_cover(x0 + (px + 0.5) * px_km,
                                                                                       y0 + (py + 0.5) * px_km),
                                            0.0, 1.0);
                v = g * (kVegetation[band] + cfg.seasonal_amplitude[band] * std::sin(season_angle)) +
                    (1 - g) * kSoil[band];
              }
              v += cfg.pixel_noise * gauss(noise);
              t.at(band, py, px) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
          }
        w.tiles.push_back(std::move(t));
      }
    }
  }

  const std::array<double, 2> slope{cfg.wealth_slope, cfg.wealth_slope * cfg.epoch2_slope_scale};
  const std::array<double, 2> intercept{cfg.wealth_intercept, cfg.wealth_intercept + cfg.epoch2_shift};
  for (int e = 0; e < 2; ++e) {
    w.cell_awi[e].resize(n_cells);
    for (int c = 0; c < n_cells; ++c) w.cell_awi[e][c] = slope[e] * w.built_mean[e][c] + intercept[e];
  }

  for (int k = 0; k < cfg.num_countries; ++k) {
    std::vector<int> cells;
    for (int c = 0; c < n_cells; ++c)
      if ((c % w.grid.cols) / cfg.cells_per_side == k) cells.push_back(c);
    for (int e = 0; e < 2; ++e) {
      Rng rng = make_rng(cfg.seed, {0xc105, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(e)});
      std::shuffle(cells.begin(), cells.end(), rng);
      std::vector<int> chosen(cells.begin(), cells.begin() + cfg.clusters_per_country);
      std::sort(chosen.begin(), chosen.end());
      for (int c : chosen) {
        TruthRecord tr;
        tr.cluster_id = w.grid.cell_name(c);
        tr.country_code = w.grid.country_codes[k];
        tr.year = cfg.years[e];
        const double half = 0.5 * w.grid.cell_deg();
        tr.lon = w.grid.center_lon(c) + (2 * uniform01(rng) - 1) * half * 0.9;
        tr.lat = w.grid.center_lat(c) + (2 * uniform01(rng) - 1) * half * 0.9;
        tr.built_mean = w.built_mean[e][c];
        tr.awi = w.cell_awi[e][c] + normal(rng, 0.0, cfg.wealth_noise);
        tr.cell = c;
        SurveyRecord rec{tr.cluster_id, tr.country_code, tr.year, tr.lon, tr.lat, tr.awi, tr.built_mean >= 0.3, -1};
        if (cfg.jitter) rec = apply_jitter(rec, rng);
        w.surveys.push_back(rec);
        w.truth.push_back(tr);
      }
    }
  }

  Rng pop_rng = make_rng(cfg.seed, {0x909});
  std::vector<double> institutions(cfg.num_countries);
  for (auto& v : institutions) v = normal(pop_rng);
  w.population.resize(n_cells);
  w.covariates.resize(n_cells);
  for (int c = 0; c < n_cells; ++c) {
    const double bm = w.built_mean[0][c];
    w.population[c] = std::max(0.0, 1500.0 * bm * bm + std::exp(normal(pop_rng, 0.5, 1.3)) - 2.5);
    const int k = (c % w.grid.cols) / cfg.cells_per_side;
    const auto& capital = *std::max_element(seeds[k].begin(), seeds[k].end(),
                                            [](const UrbanSeed& a, const UrbanSeed& b) { return a.peak < b.peak; });
    const double cx = (c % w.grid.cols + 0.5) * cfg.cell_km, cy = (c / w.grid.cols + 0.5) * cfg.cell_km;
    auto& cov = w.covariates[c];
    cov.institutions = institutions[k];
    cov.distance_to_capital_km = std::hypot(cx - capital.x, cy - capital.y);
    cov.conflict_events = std::poisson_distribution<int>(2.0 * std::exp(-cov.distance_to_capital_km / 30.0))(pop_rng);
    cov.temperature_trend = 0.02 + 0.01 * temperature(cx, cy);
  }
  return w;
}

ImageTile cell_composite(const World& world, int cell, int epoch) {
  std::vector<const ImageTile*> seasons;
  for (int s = 0; s < world.config.seasons; ++s) seasons.push_back(&world.tile(cell, epoch, s));
  return median_composite(seasons);
}

namespace {

std::string tile_stem(const ImageTile& t) { return t.location_id + "_" + std::to_string(t.year) + "_" + t.season; }

}  // namespace

void write_world(const World& world, const fs::path& dir) {
  fs::create_directories(dir / "tiles");
  fs::create_directories(dir / "oracle");
  {
    json j{{"config", world.config}, {"grid", world.grid}, {"format_version", 1}};
    std::ofstream out(dir / "world.json");
    if (!out) throw IoError("cannot write " + (dir / "world.json").string());
    out << j.dump(2) << '\n';
  }
  for (const auto& t : world.tiles) write_tile(dir / "tiles" / tile_stem(t), t);
  write_surveys(dir / "surveys.csv", world.surveys);

  Raster pop;
  pop.height = world.grid.rows;
  pop.width = world.grid.cols;
  pop.geo = {world.grid.origin_lon, world.grid.origin_lat, world.grid.cell_deg()};
  pop.layer_names = {"population_density"};
  pop.layers.emplace_back(world.population.begin(), world.population.end());
  write_raster(dir / "population", pop);

  std::ofstream grid(dir / "grid.csv");
  grid << "cell_id,lon,lat,country_code\n";
  for (int c = 0; c < world.grid.num_cells(); ++c) {
    grid << world.grid.cell_name(c) << ',' << format_double(world.grid.center_lon(c)) << ',' << format_double(world.grid.center_lat(c))
         << ',' << world.grid.country_of(c) << '\n';
  }
  std::ofstream cov(dir / "covariates.csv");
  cov << "cell_id,institutions,distance_to_capital_km,conflict_events,temperature_trend\n";
  for (std::size_t c = 0; c < world.covariates.size(); ++c) {
    const auto& v = world.covariates[c];
    cov << world.grid.cell_name(static_cast<int>(c)) << ',' << format_double(v.institutions) << ',' << format_double(v.distance_to_capital_km) << ','
        << format_double(v.conflict_events) << ',' << format_double(v.temperature_trend) << '\n';
  }
  std::ofstream truth(dir / "oracle" / "truth.csv");
  truth << "cluster_id,country_code,year,lon,lat,awi,built_mean,cell\n";
  for (const auto& t : world.truth) {
    truth << t.cluster_id << ',' << t.country_code << ',' << t.year << ',' << format_double(t.lon) << ','
          << format_double(t.lat) << ',' << format_double(t.awi) << ',' << format_double(t.built_mean) << ','
          << t.cell << '\n';
  }
  if (!truth) throw IoError("failed writing oracle file under " + dir.string());
}

World load_world(const fs::path& dir) {
  std::ifstream in(dir / "world.json");
  if (!in) throw IoError("no world.json in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed world.json: " + std::string(e.what()));
  }
  World w;
  w.config = j.at("config").get<SyntheticWorldConfig>();
  w.grid = j.at("grid").get<WorldGrid>();
  for (int c = 0; c < w.grid.num_cells(); ++c)
    for (int e = 0; e < 2; ++e)
      for (int s = 0; s < w.config.seasons; ++s) {
        const std::string stem =
            w.grid.cell_name(c) + "_" + std::to_string(w.config.years[e]) + "_s" + std::to_string(s);
        w.tiles.push_back(read_tile(dir / "tiles" / stem));
      }
  w.surveys = read_surveys(dir / "surveys.csv");
  const Raster pop = read_raster(dir / "population");
  if (pop.height != w.grid.rows || pop.width != w.grid.cols) throw ShapeError("population raster is not aligned");
  const auto& dens = pop.layer("population_density");
  w.population.assign(dens.begin(), dens.end());

  std::ifstream cov(dir / "covariates.csv");
  std::string line;
  if (cov && std::getline(cov, line)) {
    while (std::getline(cov, line)) {
      const auto f = split_csv_line(line);
      if (f.size() != 5) continue;
      w.covariates.push_back({parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
    }
  }
  return w;
}

std::vector<TruthRecord> read_truth(const fs::path& dir) {
  std::ifstream in(dir / "oracle" / "truth.csv");
  if (!in) throw IoError("no oracle file under " + dir.string());
  std::string line;
  std::getline(in, line);
  std::vector<TruthRecord> out;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError("malformed oracle row: " + line);
    out.push_back({f[0], f[1], std::stoi(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5]),
                   parse_double(f[6]), std::stoi(f[7])});
  }
  return out;
}

}  // namespace tempov::data
