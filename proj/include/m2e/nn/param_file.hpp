#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "m2e/nn/layers.hpp"

namespace m2e::nn {

/// Named-tensor container persisted as a little-endian binary file:
///
///   "M2EPARAM"                8 bytes magic
///   u32 version               currently 1
///   u32 meta_count, then per entry: u32 len, key bytes, u32 len, value bytes
///   u32 tensor_count, then per tensor:
///       u32 len, name bytes, u32 rank (= 4), u32 dims[4] (N, C, H, W), f32 values
///   u64 checksum              FNV-1a 64 over every preceding byte
struct ParamFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::uint64_t checksum = 0;

  const Tensor<float>* find(const std::string& name) const;
  void put(std::string name, Tensor<float> t);
};

/// Serializes `file`, stores the checksum back into it, and writes it to disk.
void write_param_file(const std::filesystem::path& path, ParamFile& file);
/// Throws InputError on a missing, truncated or checksum-failing file.
ParamFile read_param_file(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize(const ParamFile& file);
ParamFile deserialize(const std::vector<std::uint8_t>& bytes);

/// Copies every parameter of `module` into `file` as "<prefix>/<name>".
void export_module(Module<float>& module, const std::string& prefix, ParamFile& file);
/// Loads every parameter of `module` from "<prefix>/<name>"; throws InputError on a missing name or shape mismatch.
void import_module(Module<float>& module, const std::string& prefix, const ParamFile& file);

}  // namespace m2e::nn
