#include "dvi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dvi/errors.hpp"

namespace dvi {
namespace {

constexpr char kMagic[8] = {'D', 'V', 'I', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u = std::bit_cast<uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ConfigError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kCheckpointVersion);
  std::string meta = ckpt.meta.dump();
  put_u32(os, static_cast<uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put_u32(os, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(os, static_cast<uint32_t>(d));
  }
  for (const auto& [name, t] : ckpt.tensors) {
    for (int64_t i = 0; i < t.size(); ++i) put_f64(os, t[i]);
  }
  if (!os) throw ConfigError("write failure on checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw ConfigError("not a checkpoint file: " + path.string());
  }
  uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  uint32_t meta_len = get_u32(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), meta_len);
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint metadata: " + std::string(e.what()));
  }
  uint32_t n_tensors = get_u32(is);
  std::vector<std::vector<int>> shapes;
  std::vector<std::string> names;
  for (uint32_t k = 0; k < n_tensors; ++k) {
    uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = get_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
  }
  for (uint32_t k = 0; k < n_tensors; ++k) {
    Tensor t(shapes[k]);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = get_f64(is);
    ckpt.tensors.emplace_back(std::move(names[k]), std::move(t));
  }
  if (!is) throw ConfigError("truncated checkpoint: " + path.string());
  return ckpt;
}

}  // namespace dvi
