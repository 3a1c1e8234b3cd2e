// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Binary artifacts. All integers and floats are little-endian.
//
// Tensor record:   u32 name_len | name bytes | u32 ndim | u32 dims[ndim] |
//                  f32 values[prod(dims)]
//
// Checkpoint:      "AVJCKPT\0" | u32 version | u64 header_len | header JSON |
//                  u64 tensor_count | tensor records
//
// Dataset:         "AVJDATA\0" | u32 version | header JSON + '\n' |
//                  per sample: i32 label | u32 n_events | i32 events[n] |
//                  tensor record "video" | tensor record "audio"

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avj/jointmodel.hpp"

namespace avj {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t);
std::pair<std::string, Tensor> read_tensor(std::istream& is);

struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

// Writes to a sibling temp file then renames, so a crash never leaves a torn
// checkpoint behind.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Model + optimizer state <-> checkpoint.
Checkpoint make_checkpoint(const JointModel& model, const TrainState* state, const nlohmann::json& extra = {});
JointModel model_from_checkpoint(const Checkpoint& ckpt);
// Restores Adam moments and epoch count; model parameters must already match.
TrainState train_state_from_checkpoint(const Checkpoint& ckpt, const JointModel& model, double lr);

struct DatasetFile {
  nlohmann::json header;
  std::vector<Sample> samples;
};

void save_dataset(const std::filesystem::path& path, const DatasetFile& ds);
DatasetFile load_dataset(const std::filesystem::path& path);

}  // namespace avj
