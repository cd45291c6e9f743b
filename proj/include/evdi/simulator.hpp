#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evdi/events.hpp"
#include "evdi/tensor.hpp"
#include "json.hpp"

namespace evdi {

enum class ShapeKind { disc, square, textured_patch };
enum class TrajectoryKind { linear, sinusoidal, bounce };

// Object-center motion in pixel coordinates (pixel (x, y) spans [x, x+1)).
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::linear;
  double x0 = 0.0, y0 = 0.0;  // center at t = 0
  double vx = 0.0, vy = 0.0;  // px/s (linear, bounce)
  double ax = 0.0, ay = 0.0;  // amplitude px (sinusoidal)
  double frequency_hz = 0.0;  // sinusoidal
  double phase = 0.0;         // radians
  // Bounce box for the center. An empty box (max <= min) means the canvas
  // shrunk by the object's half size.
  double box_min_x = 0.0, box_min_y = 0.0, box_max_x = 0.0, box_max_y = 0.0;
};

struct SceneObject {
  ShapeKind shape = ShapeKind::square;
  double size = 4.0;  // diameter or side length, px
  Trajectory trajectory;
  double intensity = 0.9;
  std::array<double, 3> color{0.9, 0.9, 0.9};  // used when the scene is RGB
  double texture_period = 2.0;                 // textured_patch checker period, px
};

struct SceneSpec {
  int height = 32;
  int width = 32;
  int channels = 1;  // 1 (grayscale) or 3 (RGB)
  std::vector<SceneObject> objects;
  double background = 0.2;
  std::uint64_t duration_us = 0;
  double render_rate_hz = 1000.0;
  // Dense render steps per ground-truth video frame. Events are simulated on
  // the dense sequence; clips keep every video_stride-th frame.
  int video_stride = 1;
  std::uint64_t seed = 0;
};

struct RenderedSequence {
  Tensor frames;                          // [N, C, H, W], values in [0, 1]
  std::vector<std::uint64_t> timestamps;  // microseconds
};

struct EventModelConfig {
  double contrast_threshold = 0.2;
  double eps = 1e-3;
  bool timestamp_jitter = false;
  double jitter_fraction = 0.5;  // of the render interval
  std::uint64_t seed = 0;
};

struct DatasetClip {
  Tensor ground_truth;                      // [G, C, H, W] video-rate frames over the clip
  std::vector<std::uint64_t> frame_times;   // one per ground-truth frame
  std::vector<int> keyframe_indices;        // into ground_truth
  Tensor keyframes;                         // [K, C, H, W]
  EventStream events;                       // (t_0, t_last]
  int skip = 0;
  EventModelConfig event_model;
  SceneSpec scene;

  std::vector<std::uint64_t> keyframe_times() const;
  bool operator==(const DatasetClip&) const;
};

Trajectory linear_trajectory(double x0, double y0, double vx, double vy);

// Center position at time t (seconds).
std::array<double, 2> trajectory_position(const Trajectory& tr, double t, double half_size, int width,
                                          int height);

RenderedSequence render_scene(const SceneSpec& spec);

// Per-pixel contrast-threshold event model on log(I + eps). Luminance is used
// for RGB input.
EventStream simulate_events(const Tensor& frames, const std::vector<std::uint64_t>& timestamps,
                            const EventModelConfig& cfg);

DatasetClip make_clip(const SceneSpec& spec, int skip, int keyframe_count,
                      const EventModelConfig& event_model = {});

void write_dataset(const std::string& root, const std::vector<DatasetClip>& clips);
std::vector<DatasetClip> read_dataset(const std::string& root);

nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

}  // namespace evdi
