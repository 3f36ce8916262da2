#include "tempov/data/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tempov/core/error.hpp"

namespace tempov::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "raw blobs are written in native little-endian order");

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

void write_floats(const fs::path& p, const float* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (!out) throw IoError("short write to " + p.string());
}

void read_floats(const fs::path& p, float* data, std::size_t n) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + p.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != n * sizeof(float)) {
    throw IoError(p.string() + ": expected " + std::to_string(n * sizeof(float)) + " bytes, found " +
                  std::to_string(size));
  }
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(size));
}

json geo_json(const GeoTransform& g) {
  return {{"origin_lon", g.origin_lon}, {"origin_lat", g.origin_lat}, {"cell_size_deg", g.cell_size_deg}};
}

GeoTransform geo_from(const json& j) {
  return {j.at("origin_lon").get<double>(), j.at("origin_lat").get<double>(), j.at("cell_size_deg").get<double>()};
}

}  // namespace

void write_tile(const fs::path& stem, const ImageTile& tile) {
  tile.validate();
  json m{{"shape", {kNumBands, tile.height, tile.width}},
         {"band_order", std::vector<std::string>(kBandNames.begin(), kBandNames.end())},
         {"dtype", "f32le"},
         {"geotransform", geo_json(tile.geo)},
         {"location_id", tile.location_id},
         {"season", tile.season},
         {"year", tile.year}};
  write_text(with_ext(stem, ".json"), m.dump(2) + "\n");
  write_floats(with_ext(stem, ".bin"), tile.pixels.data(), tile.pixels.size());
}

ImageTile read_tile(const fs::path& stem) {
  const json m = read_json(with_ext(stem, ".json"));
  try {
    if (m.at("dtype").get<std::string>() != "f32le") throw IoError(stem.string() + ": unsupported dtype");
    const auto shape = m.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] != kNumBands) throw IoError(stem.string() + ": expected shape [6,H,W]");
    ImageTile t(shape[1], shape[2]);
    t.geo = geo_from(m.at("geotransform"));
    t.location_id = m.at("location_id").get<std::string>();
    t.season = m.at("season").get<std::string>();
    t.year = m.at("year").get<int>();
    read_floats(with_ext(stem, ".bin"), t.pixels.data(), t.pixels.size());
    return t;
  } catch (const json::exception& e) {
    throw IoError(stem.string() + ": bad tile manifest: " + e.what());
  }
}

const std::vector<float>& Raster::layer(const std::string& name) const {
  for (std::size_t i = 0; i < layer_names.size(); ++i)
    if (layer_names[i] == name) return layers[i];
  throw DataError("raster has no layer '" + name + "'");
}
bool Raster::has_layer(const std::string& name) const {
  return std::find(layer_names.begin(), layer_names.end(), name) != layer_names.end();
}


void write_raster(const fs::path& stem, const Raster& r) {
  if (r.layers.size() != r.layer_names.size()) throw ShapeError("raster layer names and data differ in count");
  const std::size_t n = static_cast<std::size_t>(r.height) * r.width;
  std::vector<float> flat;
  flat.reserve(n * r.layers.size());
  for (const auto& l : r.layers) {
    if (l.size() != n) throw ShapeError("raster layer size does not match height x width");
    flat.insert(flat.end(), l.begin(), l.end());
  }
  json m{{"shape", {static_cast<int>(r.layers.size()), r.height, r.width}},
         {"layers", r.layer_names},
         {"dtype", "f32le"},
         {"geotransform", geo_json(r.geo)}};
  write_text(with_ext(stem, ".json"), m.dump(2) + "\n");
  write_floats(with_ext(stem, ".bin"), flat.data(), flat.size());
}

Raster read_raster(const fs::path& stem) {
  const json m = read_json(with_ext(stem, ".json"));
  try {
    if (m.at("dtype").get<std::string>() != "f32le") throw IoError(stem.string() + ": unsupported dtype");
    const auto shape = m.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw IoError(stem.string() + ": expected shape [L,H,W]");
    Raster r;
    r.height = shape[1];
    r.width = shape[2];
    r.geo = geo_from(m.at("geotransform"));
    r.layer_names = m.at("layers").get<std::vector<std::string>>();
    if (static_cast<int>(r.layer_names.size()) != shape[0]) throw IoError(stem.string() + ": layer count mismatch");
    const std::size_t n = static_cast<std::size_t>(r.height) * r.width;
    std::vector<float> flat(n * shape[0]);
    read_floats(with_ext(stem, ".bin"), flat.data(), flat.size());
    for (int l = 0; l < shape[0]; ++l) r.layers.emplace_back(flat.begin() + l * n, flat.begin() + (l + 1) * n);
    return r;
  } catch (const json::exception& e) {
    throw IoError(stem.string() + ": bad raster manifest: " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw InputError("not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace tempov::data
