#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dvi/tensor.hpp"

namespace dvi {

/// Container written by save_checkpoint:
///   magic "DVICKPT1" | u32 version | u32 meta_len | meta (UTF-8 JSON)
///   | u32 n_tensors | per tensor: u32 name_len, name, u32 rank, u32 dims[rank]
///   | all tensor values as float64 little-endian, in declaration order.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dvi
