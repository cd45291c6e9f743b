#pragma once

#include <optional>
#include <string>

#include "evdi/adapter.hpp"
#include "json.hpp"

namespace evdi {

inline constexpr int kCheckpointVersion = 1;

// Layout: "EVDICKPT", u32 version, u64 manifest size, manifest JSON, then the
// raw little-endian f64 values of every tensor listed in the manifest, in
// manifest order. The manifest records names, shapes and content hashes.
struct LoadedCheckpoint {
  nlohmann::json manifest;
  nlohmann::json meta;  // caller-supplied run metadata
  ModelConfig model;
  BaseDenoiser base;
  std::optional<ControlBranch> branch;
  std::optional<TrainState> state;  // optimizer state of the trained stage
  std::string stage;                // "pretrain" or "adapt"; empty without state

  explicit LoadedCheckpoint(const ModelConfig& cfg) : model(cfg), base(cfg) {}
};

// `state` belongs to the branch when `branch` is given, otherwise to the base.
void save_checkpoint(const std::string& path, const BaseDenoiser& base, const ControlBranch* branch,
                     const nlohmann::json& meta, const TrainState* state);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace evdi
