#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gcnav/dc/param_store.hpp"

namespace gcnav::dc {

struct StoredTensor {
  Shape shape;
  std::vector<double> values;
};

using CheckpointData = std::map<std::string, StoredTensor>;

/// Writes every parameter of each store as "<prefix>/<name>". Values are
/// little-endian IEEE doubles, so a round trip is bit-exact.
void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, const ParamStore*>>& groups);

CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies "<prefix>/<name>" entries into the store. Throws IoError on a
/// missing entry or a shape mismatch.
void restore(ParamStore& store, const std::string& prefix, const CheckpointData& data);

}  // namespace gcnav::dc
