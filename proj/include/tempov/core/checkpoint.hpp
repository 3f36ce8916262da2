#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/core/matrix.hpp"

namespace tempov {

struct Blob {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

// Container: "TEMPOVCK", u32 version, u32 reserved, u64 manifest length,
// manifest JSON, then raw little-endian float32 blobs. The manifest's "blobs"
// array lists {name, shape, offset, nbytes}; offsets count from the first blob.
struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<Blob> blobs;

  bool has(const std::string& name) const;
  const Blob& blob(const std::string& name) const;

  template <typename T>
  void add(const std::string& name, const Matrix<T>& m) {
    Blob b{name, {m.rows(), m.cols()}, std::vector<float>(m.size())};
    for (std::size_t i = 0; i < m.size(); ++i) b.data[i] = static_cast<float>(m[i]);
    blobs.push_back(std::move(b));
  }

  // Copies a blob into `m`, which must already have the blob's shape.
  template <typename T>
  void read_into(const std::string& name, Matrix<T>& m) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tempov
