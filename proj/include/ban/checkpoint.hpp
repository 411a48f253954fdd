#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ban/params.hpp"
#include "ban/tensor.hpp"

// Flat name -> tensor container.
//
// Layout (safetensors-compatible):
//   u64 little-endian  header length N
//   N bytes            JSON: {"<key>": {"dtype": "F32", "shape": [...], "data_offsets": [b, e]}, ...,
//                             "__metadata__": {"<k>": "<v>"}}
//   payload            little-endian float32 values, offsets relative to payload start
namespace ban::checkpoint {

using TensorMap = std::map<std::string, Tensor>;
using Metadata = std::map<std::string, std::string>;

void save(const std::filesystem::path& path, const TensorMap& tensors, const Metadata& metadata = {});
TensorMap load(const std::filesystem::path& path, Metadata* metadata = nullptr);

TensorMap collect(const ParamList& params);

struct LoadResult {
    std::vector<std::string> unused_keys;  // present in the file, not in `params`
};

// Copies tensors into matching parameters. Missing keys -> CheckpointError
// listing every absent key; shape mismatches -> CheckpointError; keys with no
// parameter are returned (callers warn).
LoadResult assign(const TensorMap& tensors, const ParamList& params);

// SHA-256 over the parameters' names, shapes and raw float bytes in order.
std::string sha256_hex(const ParamList& params);

}  // namespace ban::checkpoint
