#pragma once

#include <cstdint>
#include <string>

#include "evdi/adapter.hpp"
#include "evdi/codec.hpp"
#include "evdi/diffusion.hpp"
#include "evdi/fusion.hpp"
#include "evdi/simulator.hpp"
#include "evdi/stacker.hpp"
#include "json.hpp"

namespace evdi {

enum class SceneFamily { random, ambiguous, still };

// Synthetic dataset description: one moving square per clip on a flat
// background, rendered densely and sampled at the video frame rate.
struct DatasetConfig {
  SceneFamily family = SceneFamily::random;
  int clips = 20;
  int skip = 7;
  int keyframes = 2;
  int height = 32;
  int width = 32;
  int channels = 1;
  std::uint64_t frame_interval_us = 10000;
  int video_stride = 10;
  double speed_min = 2.0;  // px per video frame
  double speed_max = 4.0;
  double object_size = 4.0;
  double background = 0.2;
  double intensity = 0.9;
  int directions = 4;  // ambiguous family: evenly spaced headings
  EventModelConfig events;

  int frames_per_clip() const { return (skip + 1) * (keyframes - 1) + 1; }
};

struct RunConfig {
  std::uint64_t seed = 0;
  int frames = 9;
  int steps = kDefaultSteps;
  double beta_min = kDefaultBetaMin;
  double beta_max = kDefaultBetaMax;
  CodecConfig codec;
  StackerConfig stacker;
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig adapt;
  DatasetConfig dataset;
  std::string dataset_path;
  std::string checkpoint;       // input checkpoint for generate/interpolate/adapt
  std::string out;

  NoiseSchedule schedule() const;
  // Model config with the fields implied by codec, stacker and frames filled in.
  ModelConfig resolved_model() const;
  void validate() const;

  nlohmann::json to_json() const;
  // Unknown keys and bad values raise ConfigError naming the field path.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::string& path);

nlohmann::json event_model_to_json(const EventModelConfig& cfg);
EventModelConfig event_model_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace evdi
