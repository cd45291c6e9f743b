#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "evdi/adapter.hpp"
#include "evdi/config.hpp"
#include "evdi/fusion.hpp"
#include "evdi/simulator.hpp"
#include "json.hpp"

namespace evdi {

// Scene timing shared by every family: frame_interval_us per video frame,
// video_stride dense render steps per frame.
SceneSpec base_scene(const DatasetConfig& cfg);

// random: one square starting near the centre, moving at a random heading and
// speed, reversing at a random frame (possibly never). still: same square,
// motionless.
SceneSpec random_scene(const DatasetConfig& cfg, SceneFamily family, std::mt19937_64& rng);

// Identical start and end keyframes (square at the centre); the hidden frames
// go out along heading i * 360/directions degrees and return.
std::vector<SceneSpec> ambiguous_scenes(const DatasetConfig& cfg);

std::vector<DatasetClip> simulate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

// First `frames` frames of a clip in latent space. `reversed` yields the view
// of the backward branch: flipped video conditioned on the last frame with
// time-reversed events.
TrainingClip training_clip(const DatasetClip& clip, const RunConfig& cfg, bool reversed);
std::vector<TrainingClip> training_clips(const std::vector<DatasetClip>& clips, const RunConfig& cfg,
                                         bool with_reversed);

// Per-pixel linear interpolation between two images over `frames` frames.
Tensor linear_blend(const Tensor& start, const Tensor& end, int frames);

// Intensity-weighted centroid (x, y) of pixels brighter than `threshold`,
// in pixel-centre coordinates; nullopt when no pixel qualifies.
std::optional<std::array<double, 2>> object_centroid(const Tensor& image, double threshold);

// Ground-truth object centre of a scene at time t (seconds).
std::array<double, 2> scene_center(const SceneSpec& scene, double t_seconds);

Pipeline make_pipeline(const Denoiser& model, const ControlBranch* branch, const RunConfig& cfg);

struct SuiteResult {
  std::vector<std::string> names;
  std::vector<double> psnr_events, psnr_zero, psnr_blend;  // mean over hidden frames, per clip
  std::vector<double> centroid_events, centroid_zero;      // mean px error over hidden frames, per clip
  double mean_psnr_events = 0, mean_psnr_zero = 0, mean_psnr_blend = 0;
  double mean_centroid_events = 0, mean_centroid_zero = 0;
  std::vector<Tensor> outputs_events, outputs_zero, outputs_blend;
  nlohmann::json to_json() const;
};

// Interpolates every clip with true events, with zeroed events and by linear
// blending; scores the hidden frames.
SuiteResult evaluate_suite(const AdaptedModel& model, const std::vector<DatasetClip>& suite, const RunConfig& cfg);

struct ControlExperiment {
  std::vector<double> pretrain_losses, adapt_losses;
  double pretrain_seconds = 0, adapt_seconds = 0, eval_seconds = 0;
  double val_base = 0, val_adapted = 0, val_zero_events = 0;
  SuiteResult suite;
  nlohmann::json to_json() const;
};

using LogFn = std::function<void(const std::string&)>;

// Simulates a training set from cfg.dataset (random family), pre-trains the
// base, trains the adapter, and evaluates the motion-ambiguous suite.
// `model_out` receives the trained model when non-null.
ControlExperiment run_control_experiment(const RunConfig& cfg, const LogFn& log = {},
                                         std::optional<AdaptedModel>* model_out = nullptr);

// Configuration used for the event-control experiment.
RunConfig control_experiment_config();

}  // namespace evdi
