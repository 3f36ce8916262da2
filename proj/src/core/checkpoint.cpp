#include "tempov/core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tempov/core/error.hpp"

namespace tempov {

namespace {
constexpr char kMagic[8] = {'T', 'E', 'M', 'P', 'O', 'V', 'C', 'K'};
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return true;
  return false;
}

const Blob& Checkpoint::blob(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  throw IoError("checkpoint has no blob '" + name + "'");
}

template <typename T>
void Checkpoint::read_into(const std::string& name, Matrix<T>& m) const {
  const Blob& b = blob(name);
  if (b.shape.size() != 2 || b.shape[0] != m.rows() || b.shape[1] != m.cols()) {
    throw ShapeError("checkpoint blob '" + name + "' does not have shape " + m.shape_str());
  }
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(b.data[i]);
}

template void Checkpoint::read_into<float>(const std::string&, Matrix<float>&) const;
template void Checkpoint::read_into<double>(const std::string&, Matrix<double>&) const;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json manifest = ck.manifest;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : ck.blobs) {
    std::size_t expect = 1;
    for (int d : b.shape) expect *= static_cast<std::size_t>(d);
    if (expect != b.data.size()) throw ShapeError("blob '" + b.name + "' data does not match its shape");
    const std::uint64_t nbytes = b.data.size() * sizeof(float);
    index.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  manifest["blobs"] = index;
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion, reserved = 0;
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(len));
  for (const auto& b : ck.blobs) {
    out.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const auto size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  char magic[8];
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError(path.string() + " is not a tempov checkpoint");
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (len > size - 24) throw IoError(path.string() + ": truncated manifest");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
  const std::uint64_t data_start = 24 + len;
  for (const auto& entry : ck.manifest.at("blobs")) {
    Blob b;
    b.name = entry.at("name").get<std::string>();
    b.shape = entry.at("shape").get<std::vector<int>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    std::size_t expect = 1;
    for (int d : b.shape) expect *= static_cast<std::size_t>(d);
    if (nbytes != expect * sizeof(float) || data_start + offset + nbytes > size) {
      throw IoError(path.string() + ": blob '" + b.name + "' is corrupt or truncated");
    }
    b.data.resize(expect);
    in.seekg(static_cast<std::streamoff>(data_start + offset));
    in.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(nbytes));
    ck.blobs.push_back(std::move(b));
  }
  ck.manifest.erase("blobs");
  return ck;
}

}  // namespace tempov
