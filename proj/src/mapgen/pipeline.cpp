#include "tempov/mapgen/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "tempov/core/error.hpp"
#include "tempov/data/io.hpp"
#include "tempov/data/pairs.hpp"

namespace tempov::mapgen {

namespace fs = std::filesystem;
using nlohmann::json;

WealthMap WealthMap::empty(const MapGrid& grid) {
  WealthMap m;
  m.grid = grid;
  const std::size_t n = grid.size();
  m.mean.assign(n, NAN);
  m.variance.assign(n, NAN);
  m.n_models.assign(n, 0);
  m.status.assign(n, CellStatus::missing);
  m.masked.assign(n, 0);
  return m;
}

void PipelineConfig::validate() const {
  if (acquisition_workers < 1 || inference_workers < 1 || queue_capacity < 1) {
    throw ConfigError("pipeline worker counts and queue capacity must be >= 1");
  }
}

DirectoryTileSource::DirectoryTileSource(fs::path dir, int year) : dir_(std::move(dir)), year_(year) {
  if (!fs::is_directory(dir_)) throw IoError("tile directory not found: " + dir_.string());
}

std::optional<data::ImageTile> DirectoryTileSource::fetch(const MapCell& cell) const {
  const std::string prefix = cell.cell_id + "_" + std::to_string(year_) + "_";
  std::vector<fs::path> stems;
  for (const auto& e : fs::directory_iterator(dir_)) {
    const std::string name = e.path().filename().string();
    if (e.path().extension() == ".json" && name.rfind(prefix, 0) == 0) stems.push_back(e.path().parent_path() / e.path().stem());
  }
  if (stems.empty()) return std::nullopt;
  std::sort(stems.begin(), stems.end());
  std::vector<data::ImageTile> tiles;
  for (const auto& s : stems) tiles.push_back(data::read_tile(s));
  std::vector<const data::ImageTile*> ptrs;
  for (const auto& t : tiles) {
    if (std::abs(t.geo.origin_lon - cell.footprint.origin_lon) > 1e-9 ||
        std::abs(t.geo.origin_lat - cell.footprint.origin_lat) > 1e-9) {
      throw DataError("tile " + t.location_id + " does not cover its grid cell");
    }
    ptrs.push_back(&t);
  }
  return data::median_composite(ptrs);
}

WorldTileSource::WorldTileSource(const data::World& world, int epoch) : world_(world), epoch_(epoch) {}

std::optional<data::ImageTile> WorldTileSource::fetch(const MapCell& cell) const {
  if (cell.index >= world_.grid.num_cells() || world_.grid.cell_name(cell.index) != cell.cell_id) return std::nullopt;
  return data::cell_composite(world_, cell.index, epoch_);
}

json to_json(const Telemetry& t) {
  json acq = json::array(), inf = json::array();
  for (const auto& v : t.acquired) acq.push_back(v.size());
  for (const auto& v : t.inferred) inf.push_back(v.size());
  return {{"acquired_per_worker", acq},
          {"inferred_per_worker", inf},
          {"max_queue_depth", t.max_queue_depth},
          {"queue_capacity", t.queue_capacity},
          {"seconds", t.seconds}};
}

namespace {

struct Item {
  int cell = 0;
  CellStatus status = CellStatus::ok;
  std::optional<data::ImageTile> tile;
};

class BoundedQueue {
 public:
  BoundedQueue(int capacity, int producers) : capacity_(capacity), producers_(producers) {}

  // False if the queue was aborted.
  bool push(Item item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return aborted_ || static_cast<int>(items_.size()) < capacity_; });
    if (aborted_) return false;
    items_.push_back(std::move(item));
    max_depth_ = std::max(max_depth_, static_cast<int>(items_.size()));
    not_empty_.notify_one();
    return true;
  }

  std::optional<Item> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return aborted_ || !items_.empty() || producers_ == 0; });
    if (aborted_ || items_.empty()) return std::nullopt;
    Item it = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return it;
  }

  void producer_done() {
    std::lock_guard lock(mu_);
    if (--producers_ == 0) not_empty_.notify_all();
  }

  void abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  int max_depth() const { return max_depth_; }

 private:
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<Item> items_;
  int capacity_;
  int producers_;
  bool aborted_ = false;
  int max_depth_ = 0;
};

}  // namespace

WealthMap run_pipeline(const MapGrid& grid, const std::vector<const adapt::WealthModel<float>*>& models,
                       const TileSource& source, const PipelineConfig& cfg, Telemetry* telemetry) {
  cfg.validate();
  if (models.empty()) throw ConfigError("map inference needs at least one model");
  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(grid.size());
  const std::size_t m = models.size();
  std::vector<double> slot_mean(n * m, NAN), slot_var(n * m, NAN);
  std::vector<CellStatus> status(n, CellStatus::missing);

  // Acquisition work lists: either countries pinned to workers or a shared counter.
  std::vector<std::vector<int>> shards;
  if (cfg.shard_by_country) {
    std::vector<std::string> codes;
    for (const auto& c : grid.cells)
      if (std::find(codes.begin(), codes.end(), c.country) == codes.end()) codes.push_back(c.country);
    shards.resize(cfg.acquisition_workers);
    for (const auto& c : grid.cells) {
      const auto k = std::find(codes.begin(), codes.end(), c.country) - codes.begin();
      shards[k % cfg.acquisition_workers].push_back(c.index);
    }
  }
  std::atomic<int> next{0};
  BoundedQueue queue(cfg.queue_capacity, cfg.acquisition_workers);
  std::vector<std::vector<int>> acquired(cfg.acquisition_workers), inferred(cfg.inference_workers);
  std::mutex err_mu;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(err_mu);
      if (!error) error = e;
    }
    queue.abort();
  };

  std::vector<std::thread> threads;
  for (int w = 0; w < cfg.acquisition_workers; ++w) {
    threads.emplace_back([&, w] {
      std::size_t pos = 0;
      auto take = [&]() -> int {
        if (cfg.shard_by_country) return pos < shards[w].size() ? shards[w][pos++] : -1;
        const int i = next.fetch_add(1);
        return i < n ? i : -1;
      };
      try {
        for (int i = take(); i >= 0; i = take()) {
          Item item;
          item.cell = i;
          try {
            item.tile = source.fetch(grid.cells[i]);
            item.status = item.tile ? CellStatus::ok : CellStatus::missing;
          } catch (const std::exception&) {
            item.tile.reset();
            item.status = CellStatus::failed;
          }
          acquired[w].push_back(i);
          if (!queue.push(std::move(item))) break;
        }
      } catch (...) {
        fail(std::current_exception());
      }
      queue.producer_done();
    });
  }
  for (int w = 0; w < cfg.inference_workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        while (auto item = queue.pop()) {
          const int i = item->cell;
          status[i] = item->status;
          if (item->tile) {
            for (std::size_t k = 0; k < m; ++k) {
              const auto p = models[k]->predict(*item->tile);
              slot_mean[i * m + k] = p.mean;
              slot_var[i * m + k] = p.variance;
            }
          }
          inferred[w].push_back(i);
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  // Barrier passed: reduce in fixed model order.
  WealthMap map = WealthMap::empty(grid);
  map.status = status;
  for (int i = 0; i < n; ++i) {
    if (status[i] != CellStatus::ok) continue;
    double mu = 0, within = 0;
    for (std::size_t k = 0; k < m; ++k) {
      mu += slot_mean[i * m + k];
      within += slot_var[i * m + k];
    }
    mu /= m;
    double between = 0;
    for (std::size_t k = 0; k < m; ++k) between += (slot_mean[i * m + k] - mu) * (slot_mean[i * m + k] - mu);
    map.mean[i] = mu;
    map.variance[i] = within / m + between / m;
    map.n_models[i] = static_cast<int>(m);
  }
  if (telemetry) {
    telemetry->acquired = std::move(acquired);
    telemetry->inferred = std::move(inferred);
    telemetry->max_queue_depth = queue.max_depth();
    telemetry->queue_capacity = cfg.queue_capacity;
    telemetry->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return map;
}

void apply_population_mask(WealthMap& map, const std::vector<double>& density, double threshold) {
  if (density.size() != map.grid.size()) throw ShapeError("population layer is not aligned with the map grid");
  map.population = density;
  map.mask_threshold = threshold;
  map.masked.assign(density.size(), 0);
  for (std::size_t i = 0; i < density.size(); ++i) map.masked[i] = density[i] <= threshold;
}

WealthMap diff_maps(const WealthMap& t1, const WealthMap& t2) {
  if (!t1.grid.same_geometry(t2.grid)) throw ShapeError("maps are on different grids");
  WealthMap d = WealthMap::empty(t1.grid);
  const std::size_t n = t1.grid.size();
  d.mask_threshold = std::max(t1.mask_threshold, t2.mask_threshold);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = t1.status[i] == CellStatus::ok && t2.status[i] == CellStatus::ok;
    d.status[i] = ok ? CellStatus::ok : std::max(t1.status[i], t2.status[i]);
    d.mean[i] = t2.mean[i] - t1.mean[i];
    d.variance[i] = t1.variance[i] + t2.variance[i];
    d.n_models[i] = std::min(t1.n_models[i], t2.n_models[i]);
    const bool m1 = !t1.masked.empty() && t1.masked[i];
    const bool m2 = !t2.masked.empty() && t2.masked[i];
    d.masked[i] = m1 || m2;
  }
  if (!t1.population.empty()) d.population = t1.population;
  return d;
}

}  // namespace tempov::mapgen
