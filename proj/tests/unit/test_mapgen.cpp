#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include <unistd.h>

#include "common.hpp"
#include "tempov/adapt/finetune.hpp"
#include "tempov/cli/workflow.hpp"
#include "tempov/mapgen/grid.hpp"
#include "tempov/mapgen/output.hpp"
#include "tempov/mapgen/pipeline.hpp"

using namespace tempov;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tempov_map_" + std::to_string(getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

mapgen::MapGrid grid2x2() {
  mapgen::Region r{30.0, 0.0, 12.0, 12.0, {{"AAA", 0.0}}};
  return mapgen::make_grid(r, 6.0, 8);
}

std::array<std::uint8_t, 3> pixel(const mapgen::Image& img, int x, int y) {
  const std::size_t o = (std::size_t(y) * img.width + x) * 3;
  return {img.rgb[o], img.rgb[o + 1], img.rgb[o + 2]};
}

struct ToyWorld {
  data::World world;
  std::vector<adapt::WealthModel<float>> models;
};

ToyWorld toy_world() {
  ToyWorld t;
  data::SyntheticWorldConfig cfg;
  cfg.cells_per_side = 4;
  cfg.tile_size = 16;
  cfg.clusters_per_country = 4;
  t.world = data::generate_world(cfg);
  auto pairs = testing::random_pairs(2, 8, 1);
  pretrain::Pretrainer<float> tr(backbone::EncoderConfig::gradcheck(), testing::tiny_pretrain(), testing::stats_of(pairs));
  const auto ck = cli::pretrained_checkpoint(tr);
  adapt::AdaptationPlan plan;
  plan.lora.rank = 2;
  for (int m = 0; m < 3; ++m) {
    plan.seed = m;
    auto model = adapt::prepare_model<float>(ck, plan);
    Rng rng = make_rng(m, {0x4ead});
    model.visit([&](const std::string& name, Param<float>& p) {
      if (name.rfind("regression", 0) == 0)
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<float>(normal(rng, 0, 0.5));
    });
    t.models.push_back(std::move(model));
  }
  return t;
}

}  // namespace

TEST_CASE("grid enumeration and json round trip") {
  const auto g = grid2x2();
  CHECK(g.rows == 2);
  CHECK(g.cols == 2);
  CHECK(g.size() == 4);
  CHECK(g.cells[1].col == 1);
  CHECK(g.cells[2].row == 1);
  CHECK(g.cells[0].lon < g.cells[1].lon);
  CHECK(g.cells[0].lat > g.cells[2].lat);
  nlohmann::json j = g;
  CHECK(mapgen::grid_from_json(j).same_geometry(g));
  CHECK_THROWS_AS(mapgen::make_grid({30.0, 0.0, 13.0, 12.0, {{"AAA", 0.0}}}, 6.0), ConfigError);
  CHECK_THROWS_AS(mapgen::make_grid({30.0, 0.0, 12.0, 12.0, {{"AAA", 0.0}}}, 0.0), ConfigError);
}

TEST_CASE("heatmap colours: ramp ends, masked and missing cells, legend") {
  auto map = mapgen::WealthMap::empty(grid2x2());
  map.mean = {0.0, 1.0, 0.5, NAN};
  map.variance = {0.1, 0.1, 0.1, NAN};
  map.n_models = {1, 1, 1, 0};
  map.status = {mapgen::CellStatus::ok, mapgen::CellStatus::ok, mapgen::CellStatus::ok, mapgen::CellStatus::missing};
  mapgen::apply_population_mask(map, {5.0, 5.0, 1.0, 5.0}, 1.0);

  const auto img = mapgen::render_heatmap(map, mapgen::HeatmapMode::level);
  CHECK(img.width == 2 * mapgen::kPixelsPerCell);
  CHECK(img.height == 2 * mapgen::kPixelsPerCell + mapgen::kLegendHeight);
  using P = std::array<std::uint8_t, 3>;
  CHECK(pixel(img, 1, 1) == P{68, 1, 84});
  CHECK(pixel(img, 9, 1) == P{253, 231, 37});
  CHECK(pixel(img, 1, 9) == P{160, 160, 160});
  CHECK(pixel(img, 9, 9) == P{64, 64, 64});
  CHECK(pixel(img, 0, 16) == P{255, 255, 255});
  CHECK(pixel(img, 0, 20) == P{68, 1, 84});
  CHECK(pixel(img, img.width - 1, 20) == P{253, 231, 37});

  const std::string ppm = mapgen::encode_ppm(img);
  CHECK(ppm.rfind("P6\n16 28\n255\n", 0) == 0);
  CHECK(ppm.size() == 13 + img.rgb.size());

  map.mean = {-2.0, 0.0, 0.5, NAN};
  const auto ch = mapgen::render_heatmap(map, mapgen::HeatmapMode::change);
  CHECK(pixel(ch, 1, 1) == P{33, 102, 172});
  CHECK(pixel(ch, 9, 1) == P{247, 247, 247});

  map.masked = {1, 1, 1, 1};
  CHECK(mapgen::render_heatmap(map, mapgen::HeatmapMode::level).blank);
}

TEST_CASE("map raster and csv round trip") {
  auto map = mapgen::WealthMap::empty(grid2x2());
  map.mean = {0.25, -1.5, 3.0, NAN};
  map.variance = {0.5, 0.25, 1.0, NAN};
  map.n_models = {2, 2, 2, 0};
  map.status = {mapgen::CellStatus::ok, mapgen::CellStatus::ok, mapgen::CellStatus::failed, mapgen::CellStatus::missing};
  mapgen::apply_population_mask(map, {0.5, 2.0, 1.0, 9.0});
  const auto dir = scratch("raster");
  mapgen::write_map_raster(dir / "m", map);
  const auto back = mapgen::read_map_raster(dir / "m", map.grid);
  CHECK(back.mean[0] == 0.25);
  CHECK(back.mean[1] == -1.5);
  CHECK(std::isnan(back.mean[3]));
  CHECK(back.status == map.status);
  CHECK(back.masked == map.masked);
  CHECK(back.n_models == map.n_models);
  CHECK(back.population[3] == 9.0);
  mapgen::write_map_csv(dir / "m.csv", map);
  CHECK(fs::file_size(dir / "m.csv") > 0);
  fs::remove_all(dir);
}

TEST_CASE("population mask boundary is inclusive at the threshold") {
  auto map = mapgen::WealthMap::empty(grid2x2());
  map.mean = {1, 2, 3, 4};
  const double above = std::nextafter(1.0, 2.0);
  mapgen::apply_population_mask(map, {1.0, above, 0.0, 100.0}, 1.0);
  CHECK(map.masked == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(map.mean[0] == 1);
  CHECK_THROWS(mapgen::apply_population_mask(map, {1.0}, 1.0));
}

TEST_CASE("pipeline output is independent of worker counts and equals the serial ensemble") {
  const auto tw = toy_world();
  const auto grid = mapgen::grid_of_world(tw.world.grid, tw.world.config.tile_size);
  const mapgen::WorldTileSource src(tw.world, 0);
  std::vector<const adapt::WealthModel<float>*> models;
  for (const auto& m : tw.models) models.push_back(&m);

  mapgen::Telemetry tel;
  const auto base = mapgen::run_pipeline(grid, models, src, {1, 1, 2, false}, &tel);
  int inferred = 0;
  for (const auto& w : tel.inferred) inferred += int(w.size());
  CHECK(inferred == int(grid.size()));
  CHECK(tel.max_queue_depth <= 2);

  for (auto cfg : {mapgen::PipelineConfig{3, 2, 1, false}, mapgen::PipelineConfig{4, 4, 8, true}}) {
    const auto other = mapgen::run_pipeline(grid, models, src, cfg);
    CHECK(std::memcmp(other.mean.data(), base.mean.data(), base.mean.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(other.variance.data(), base.variance.data(), base.variance.size() * sizeof(double)) == 0);
  }

  for (std::size_t i = 0; i < grid.size(); i += 7) {
    const auto tile = *src.fetch(grid.cells[i]);
    double mean = 0, second = 0;
    for (const auto& m : tw.models) {
      const auto p = m.predict(tile);
      mean += p.mean / 3;
      second += (p.variance + p.mean * p.mean) / 3;
    }
    CHECK(base.mean[i] == doctest::Approx(mean).epsilon(1e-9));
    CHECK(base.variance[i] == doctest::Approx(second - mean * mean).epsilon(1e-6));
    CHECK(base.n_models[i] == 3);
  }

  const auto d = mapgen::diff_maps(base, base);
  for (double v : d.mean) CHECK(v == 0.0);
  CHECK_THROWS_AS(mapgen::PipelineConfig({0, 1, 1, false}).validate(), ConfigError);
}
