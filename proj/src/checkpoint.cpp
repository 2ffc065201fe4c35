#include "edk/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "edk/errors.hpp"

namespace edk::ckpt {

namespace {
constexpr char kMagic[8] = {'E', 'D', 'K', 'C', 'K', 'P', 'T', '1'};

std::vector<char> matrix_bytes(const Matrix& m) {
  std::vector<char> out(sizeof(double) * static_cast<std::size_t>(m.size()));
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::memcpy(out.data() + pos, &m(i, j), sizeof(double));
      pos += sizeof(double);
    }
  }
  return out;
}

uint32_t crc_of(const std::vector<char>& bytes) {
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}
}  // namespace

void save(const std::string& path, const Checkpoint& c) {
  nlohmann::json manifest;
  manifest["version"] = c.version;
  manifest["kind"] = c.kind;
  manifest["schema_fingerprint"] = std::to_string(c.schema_fingerprint);
  manifest["config"] = c.config_json;

  std::vector<char> payload;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : c.params) {
    const auto bytes = matrix_bytes(p.value);
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["rows"] = p.value.rows();
    entry["cols"] = p.value.cols();
    entry["offset"] = payload.size();
    entry["crc32"] = crc_of(bytes);
    params.push_back(std::move(entry));
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  }
  manifest["params"] = std::move(params);

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for write");
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw DataError("checkpoint: truncated manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint: truncated manifest");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: manifest parse: ") + e.what());
  }

  Checkpoint c;
  c.version = manifest.at("version").get<int>();
  c.kind = manifest.at("kind").get<std::string>();
  c.schema_fingerprint =
      std::stoull(manifest.at("schema_fingerprint").get<std::string>());
  c.config_json = manifest.at("config").get<std::string>();
  for (const auto& entry : manifest.at("params")) {
    NamedMatrix p;
    p.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto want_crc = entry.at("crc32").get<uint32_t>();
    const std::size_t n_bytes =
        sizeof(double) * static_cast<std::size_t>(rows * cols);
    if (offset + n_bytes > payload.size())
      throw DataError("checkpoint: payload truncated for " + p.name);
    std::vector<char> bytes(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                            payload.begin() +
                                static_cast<std::ptrdiff_t>(offset + n_bytes));
    if (crc_of(bytes) != want_crc)
      throw DataError("checkpoint: checksum mismatch for " + p.name);
    p.value.resize(rows, cols);
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::memcpy(&p.value(i, j), bytes.data() + pos, sizeof(double));
        pos += sizeof(double);
      }
    }
    c.params.push_back(std::move(p));
  }
  return c;
}

std::vector<NamedMatrix> collect(const nn::ParameterStore& store,
                                 const std::string& prefix) {
  std::vector<NamedMatrix> out;
  for (const auto* p : store.all()) {
    if (prefix.empty() || p->name.rfind(prefix, 0) == 0)
      out.push_back({p->name, p->value});
  }
  return out;
}

void assign(nn::ParameterStore& store, const std::vector<NamedMatrix>& params) {
  for (const auto& p : params) {
    auto* dst = store.find(p.name);
    if (dst == nullptr)
      throw DataError("checkpoint: unknown parameter " + p.name);
    if (dst->value.rows() != p.value.rows() ||
        dst->value.cols() != p.value.cols())
      throw DataError("checkpoint: shape mismatch for " + p.name);
    dst->value = p.value;
  }
}

}  // namespace edk::ckpt
