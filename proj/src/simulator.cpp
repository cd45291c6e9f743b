#include "evdi/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "evdi/errors.hpp"
#include "evdi/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evdi {

namespace {

constexpr int kSubsamples = 4;

double reflect(double u, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double s = std::fmod(u - lo, 2.0 * span);
  if (s < 0.0) s += 2.0 * span;
  return s <= span ? lo + s : lo + 2.0 * span - s;
}

// Value of `obj` at continuous point (qx, qy) if covered, per channel.
bool sample_object(const SceneObject& obj, double px, double py, double qx, double qy, int channels,
                   double* out) {
  const double half = obj.size / 2.0;
  const double dx = qx - px, dy = qy - py;
  bool inside = false;
  if (obj.shape == ShapeKind::disc) {
    inside = dx * dx + dy * dy <= half * half;
  } else {
    inside = std::abs(dx) <= half && std::abs(dy) <= half;
  }
  if (!inside) return false;
  double scale = 1.0;
  if (obj.shape == ShapeKind::textured_patch) {
    const double period = std::max(obj.texture_period, 1e-6);
    const long cx = static_cast<long>(std::floor((dx + half) / period));
    const long cy = static_cast<long>(std::floor((dy + half) / period));
    scale = ((cx + cy) % 2 == 0) ? 1.0 : 0.5;
  }
  if (channels == 1) {
    out[0] = obj.intensity * scale;
  } else {
    for (int c = 0; c < 3; ++c) out[c] = obj.color[static_cast<std::size_t>(c)] * scale;
  }
  return true;
}

std::uint64_t rate_timestamp(std::size_t i, double rate_hz) {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * 1e6 / rate_hz));
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::square: return "square";
    case ShapeKind::textured_patch: return "textured-patch";
  }
  return "square";
}

ShapeKind shape_from_name(const std::string& s) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "square") return ShapeKind::square;
  if (s == "textured-patch") return ShapeKind::textured_patch;
  throw ConfigError("scene.objects.shape: unknown shape '" + s + "'");
}

const char* trajectory_name(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::linear: return "linear";
    case TrajectoryKind::sinusoidal: return "sinusoidal";
    case TrajectoryKind::bounce: return "bounce";
  }
  return "linear";
}

TrajectoryKind trajectory_from_name(const std::string& s) {
  if (s == "linear") return TrajectoryKind::linear;
  if (s == "sinusoidal") return TrajectoryKind::sinusoidal;
  if (s == "bounce") return TrajectoryKind::bounce;
  throw ConfigError("scene.objects.trajectory.kind: unknown trajectory '" + s + "'");
}

std::string clip_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%04zu", i);
  return buf;
}

std::string frame_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

void write_video_frames(const fs::path& dir, const Tensor& video) {
  fs::create_directories(dir);
  const char* ext = video.dim(1) == 1 ? ".pgm" : ".ppm";
  for (int f = 0; f < video.dim(0); ++f) {
    write_pnm((dir / (frame_file_name(static_cast<std::size_t>(f)) + ext)).string(), frame_image(video, f));
  }
}

Tensor read_video_frames(const fs::path& dir, int count, int channels) {
  if (!fs::is_directory(dir)) throw IoError("missing frame directory", dir.string());
  std::size_t on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (ext == ".pgm" || ext == ".ppm") ++on_disk;
  }
  if (on_disk != static_cast<std::size_t>(count)) {
    throw IntegrityError("frame count mismatch in " + dir.string() + ": metadata says " +
                         std::to_string(count) + ", found " + std::to_string(on_disk));
  }
  const char* ext = channels == 1 ? ".pgm" : ".ppm";
  std::vector<Tensor> frames;
  for (int f = 0; f < count; ++f) {
    const fs::path p = dir / (frame_file_name(static_cast<std::size_t>(f)) + ext);
    if (!fs::exists(p)) throw IoError("missing frame file", p.string());
    frames.push_back(read_pnm(p.string()));
    if (frames.back().dim(0) != channels) throw IntegrityError("channel count mismatch in " + p.string());
  }
  return stack_frames(frames);
}

}  // namespace

Trajectory linear_trajectory(double x0, double y0, double vx, double vy) {
  Trajectory t;
  t.kind = TrajectoryKind::linear;
  t.x0 = x0;
  t.y0 = y0;
  t.vx = vx;
  t.vy = vy;
  return t;
}

std::array<double, 2> trajectory_position(const Trajectory& tr, double t, double half_size, int width,
                                          int height) {
  switch (tr.kind) {
    case TrajectoryKind::linear:
      return {tr.x0 + tr.vx * t, tr.y0 + tr.vy * t};
    case TrajectoryKind::sinusoidal: {
      const double s = std::sin(2.0 * std::numbers::pi * tr.frequency_hz * t + tr.phase);
      return {tr.x0 + tr.ax * s, tr.y0 + tr.ay * s};
    }
    case TrajectoryKind::bounce: {
      double lx = tr.box_min_x, hx = tr.box_max_x, ly = tr.box_min_y, hy = tr.box_max_y;
      if (hx <= lx) {
        lx = half_size;
        hx = width - half_size;
      }
      if (hy <= ly) {
        ly = half_size;
        hy = height - half_size;
      }
      return {reflect(tr.x0 + tr.vx * t, lx, hx), reflect(tr.y0 + tr.vy * t, ly, hy)};
    }
  }
  return {tr.x0, tr.y0};
}

RenderedSequence render_scene(const SceneSpec& spec) {
  if (spec.duration_us == 0) throw ArgumentError("render_scene: zero duration");
  if (spec.height < 1 || spec.width < 1) throw ArgumentError("render_scene: empty canvas");
  if (spec.channels != 1 && spec.channels != 3) throw ArgumentError("render_scene: channels must be 1 or 3");
  if (!(spec.render_rate_hz > 0.0)) throw ArgumentError("render_scene: render rate must be positive");
  if (spec.video_stride < 1) throw ArgumentError("render_scene: video_stride must be >= 1");
  for (const auto& obj : spec.objects) {
    if (obj.size < 1.0) throw ArgumentError("render_scene: object size must be >= 1 px");
  }
  const auto count = static_cast<std::size_t>(
      std::floor(static_cast<double>(spec.duration_us) * spec.render_rate_hz / 1e6)) + 1;
  if (count < 2) throw ArgumentError("render_scene: duration shorter than one render step");

  RenderedSequence seq;
  seq.timestamps.resize(count);
  for (std::size_t i = 0; i < count; ++i) seq.timestamps[i] = rate_timestamp(i, spec.render_rate_hz);

  // Motion per dense step must stay below one pixel for the event model.
  for (const auto& obj : spec.objects) {
    auto prev = trajectory_position(obj.trajectory, 0.0, obj.size / 2, spec.width, spec.height);
    for (std::size_t i = 1; i < count; ++i) {
      const auto cur = trajectory_position(obj.trajectory, static_cast<double>(seq.timestamps[i]) * 1e-6,
                                           obj.size / 2, spec.width, spec.height);
      if (std::hypot(cur[0] - prev[0], cur[1] - prev[1]) >= 1.0) {
        throw ArgumentError("render_scene: object moves >= 1 px per render step; raise render_rate_hz");
      }
      prev = cur;
    }
  }

  const int channels = spec.channels;
  seq.frames = Tensor({static_cast<int>(count), channels, spec.height, spec.width});
  std::vector<std::array<double, 2>> centers(spec.objects.size());
  const double inv = 1.0 / (kSubsamples * kSubsamples);
  double value[3];
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(seq.timestamps[i]) * 1e-6;
    for (std::size_t o = 0; o < spec.objects.size(); ++o) {
      centers[o] = trajectory_position(spec.objects[o].trajectory, t, spec.objects[o].size / 2, spec.width,
                                       spec.height);
    }
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        double acc[3] = {0.0, 0.0, 0.0};
        for (int sy = 0; sy < kSubsamples; ++sy) {
          for (int sx = 0; sx < kSubsamples; ++sx) {
            const double qx = x + (sx + 0.5) / kSubsamples, qy = y + (sy + 0.5) / kSubsamples;
            bool hit = false;
            // Later objects occlude earlier ones.
            for (std::size_t o = spec.objects.size(); o-- > 0 && !hit;) {
              hit = sample_object(spec.objects[o], centers[o][0], centers[o][1], qx, qy, channels, value);
            }
            for (int c = 0; c < channels; ++c) acc[c] += hit ? value[c] : spec.background;
          }
        }
        for (int c = 0; c < channels; ++c) seq.frames.at(static_cast<int>(i), c, y, x) = acc[c] * inv;
      }
    }
  }
  quantize_unit(seq.frames);
  return seq;
}

EventStream simulate_events(const Tensor& frames, const std::vector<std::uint64_t>& timestamps,
                            const EventModelConfig& cfg) {
  if (!(cfg.contrast_threshold > 0.0)) throw ArgumentError("simulate_events: contrast threshold must be > 0");
  if (!(cfg.eps > 0.0)) throw ArgumentError("simulate_events: eps must be > 0");
  if (frames.rank() != 4 || frames.dim(0) != static_cast<int>(timestamps.size())) {
    throw ArgumentError("simulate_events: need one timestamp per frame");
  }
  const int n = frames.dim(0), channels = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
  if (channels != 1 && channels != 3) throw ArgumentError("simulate_events: 1 or 3 channels expected");
  for (int i = 1; i < n; ++i) {
    if (timestamps[i] <= timestamps[i - 1]) throw ArgumentError("simulate_events: timestamps must increase");
  }
  const SensorSize sensor{w, h};
  if (n == 0) return EventStream(sensor, {});

  auto log_lum = [&](int f, int y, int x) {
    double v;
    if (channels == 1) {
      v = frames.at(f, 0, y, x);
    } else {
      v = 0.299 * frames.at(f, 0, y, x) + 0.587 * frames.at(f, 1, y, x) + 0.114 * frames.at(f, 2, y, x);
    }
    return std::log(v + cfg.eps);
  };

  const double c = cfg.contrast_threshold;
  std::vector<double> ref(static_cast<std::size_t>(h) * w), prev(ref.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ref[y * w + x] = prev[y * w + x] = log_lum(0, y, x);

  std::mt19937_64 rng(cfg.seed);
  std::vector<EventRecord> out, interval;
  for (int f = 1; f < n; ++f) {
    const std::uint64_t t0 = timestamps[f - 1], t1 = timestamps[f];
    const double dt = static_cast<double>(t1 - t0);
    interval.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double cur = log_lum(f, y, x);
        const double delta = cur - ref[i];
        // Small slack so an exact multiple of C is not lost to rounding.
        const long k = static_cast<long>(std::floor(std::abs(delta) / c + 1e-9));
        if (k > 0) {
          const int sign = delta > 0 ? 1 : -1;
          const double slope = cur - prev[i];
          for (long j = 1; j <= k; ++j) {
            const double level = ref[i] + sign * j * c;
            double frac = slope != 0.0 ? (level - prev[i]) / slope : 1.0;
            frac = std::clamp(frac, 0.0, 1.0);
            if (cfg.timestamp_jitter) {
              std::uniform_real_distribution<double> u(-cfg.jitter_fraction, cfg.jitter_fraction);
              frac = std::clamp(frac + u(rng), 0.0, 1.0);
            }
            auto t = static_cast<std::uint64_t>(std::llround(static_cast<double>(t0) + frac * dt));
            t = std::clamp(t, t0 + 1, t1);
            interval.push_back({t, x, y, sign});
          }
          ref[i] += sign * k * c;
        }
        prev[i] = cur;
      }
    }
    std::stable_sort(interval.begin(), interval.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.t < b.t; });
    out.insert(out.end(), interval.begin(), interval.end());
  }
  return EventStream(sensor, std::move(out));
}

std::vector<std::uint64_t> DatasetClip::keyframe_times() const {
  std::vector<std::uint64_t> t;
  for (int i : keyframe_indices) t.push_back(frame_times.at(static_cast<std::size_t>(i)));
  return t;
}

bool DatasetClip::operator==(const DatasetClip& o) const {
  return ground_truth == o.ground_truth && frame_times == o.frame_times &&
         keyframe_indices == o.keyframe_indices && keyframes == o.keyframes && events == o.events &&
         skip == o.skip && event_model.contrast_threshold == o.event_model.contrast_threshold &&
         event_model.eps == o.event_model.eps && event_model.seed == o.event_model.seed &&
         scene_to_json(scene) == scene_to_json(o.scene);
}

DatasetClip make_clip(const SceneSpec& spec, int skip, int keyframe_count, const EventModelConfig& event_model) {
  if (skip < 0) throw ArgumentError("make_clip: skip must be >= 0");
  if (keyframe_count < 2) throw ArgumentError("make_clip: need at least 2 keyframes");
  const RenderedSequence dense = render_scene(spec);
  const int stride = spec.video_stride;
  const int video_count = (dense.frames.dim(0) - 1) / stride + 1;
  const int last = (keyframe_count - 1) * (skip + 1);
  if (last >= video_count) {
    throw ArgumentError("make_clip: " + std::to_string(video_count) + " video frames cannot hold " +
                        std::to_string(keyframe_count) + " keyframes at skip " + std::to_string(skip));
  }
  const EventStream all = simulate_events(dense.frames, dense.timestamps, event_model);

  DatasetClip clip;
  clip.scene = spec;
  clip.skip = skip;
  clip.event_model = event_model;
  std::vector<Tensor> gt;
  for (int v = 0; v <= last; ++v) {
    gt.push_back(frame_image(dense.frames, v * stride));
    clip.frame_times.push_back(dense.timestamps[static_cast<std::size_t>(v * stride)]);
  }
  clip.ground_truth = stack_frames(gt);
  std::vector<Tensor> keys;
  for (int k = 0; k < keyframe_count; ++k) {
    clip.keyframe_indices.push_back(k * (skip + 1));
    keys.push_back(gt[static_cast<std::size_t>(k * (skip + 1))]);
  }
  clip.keyframes = stack_frames(keys);
  clip.events = slice_events(all, clip.frame_times.front(), clip.frame_times.back());
  return clip;
}

json scene_to_json(const SceneSpec& spec) {
  json objects = json::array();
  for (const auto& o : spec.objects) {
    const auto& t = o.trajectory;
    objects.push_back({{"shape", shape_name(o.shape)},
                       {"size", o.size},
                       {"intensity", o.intensity},
                       {"color", o.color},
                       {"texture_period", o.texture_period},
                       {"trajectory",
                        {{"kind", trajectory_name(t.kind)},
                         {"x0", t.x0},
                         {"y0", t.y0},
                         {"vx", t.vx},
                         {"vy", t.vy},
                         {"ax", t.ax},
                         {"ay", t.ay},
                         {"frequency_hz", t.frequency_hz},
                         {"phase", t.phase},
                         {"box", {t.box_min_x, t.box_min_y, t.box_max_x, t.box_max_y}}}}});
  }
  return {{"height", spec.height},
          {"width", spec.width},
          {"channels", spec.channels},
          {"background", spec.background},
          {"duration_us", spec.duration_us},
          {"render_rate_hz", spec.render_rate_hz},
          {"video_stride", spec.video_stride},
          {"seed", spec.seed},
          {"objects", objects}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  try {
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.channels = j.value("channels", s.channels);
    s.background = j.value("background", s.background);
    s.duration_us = j.value("duration_us", s.duration_us);
    s.render_rate_hz = j.value("render_rate_hz", s.render_rate_hz);
    s.video_stride = j.value("video_stride", s.video_stride);
    s.seed = j.value("seed", s.seed);
    for (const auto& jo : j.value("objects", json::array())) {
      SceneObject o;
      o.shape = shape_from_name(jo.value("shape", std::string("square")));
      o.size = jo.value("size", o.size);
      o.intensity = jo.value("intensity", o.intensity);
      if (jo.contains("color")) o.color = jo.at("color").get<std::array<double, 3>>();
      o.texture_period = jo.value("texture_period", o.texture_period);
      const json jt = jo.value("trajectory", json::object());
      auto& t = o.trajectory;
      t.kind = trajectory_from_name(jt.value("kind", std::string("linear")));
      t.x0 = jt.value("x0", 0.0);
      t.y0 = jt.value("y0", 0.0);
      t.vx = jt.value("vx", 0.0);
      t.vy = jt.value("vy", 0.0);
      t.ax = jt.value("ax", 0.0);
      t.ay = jt.value("ay", 0.0);
      t.frequency_hz = jt.value("frequency_hz", 0.0);
      t.phase = jt.value("phase", 0.0);
      if (jt.contains("box")) {
        const auto box = jt.at("box").get<std::array<double, 4>>();
        t.box_min_x = box[0];
        t.box_min_y = box[1];
        t.box_max_x = box[2];
        t.box_max_y = box[3];
      }
      s.objects.push_back(o);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  return s;
}

void write_dataset(const std::string& root, const std::vector<DatasetClip>& clips) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw IoError("cannot create dataset directory", root);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const DatasetClip& clip = clips[i];
    const fs::path dir = fs::path(root) / clip_dir_name(i);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create clip directory", dir.string());
    write_video_frames(dir / "frames", clip.ground_truth);
    write_video_frames(dir / "keyframes", clip.keyframes);
    write_events_file((dir / "events.evb").string(), clip.events);
    json meta = {{"format_version", 1},
                 {"sensor", {{"width", clip.events.width()}, {"height", clip.events.height()}}},
                 {"channels", clip.ground_truth.dim(1)},
                 {"frame_count", clip.ground_truth.dim(0)},
                 {"frame_times", clip.frame_times},
                 {"keyframe_count", clip.keyframes.dim(0)},
                 {"keyframe_indices", clip.keyframe_indices},
                 {"skip", clip.skip},
                 {"contrast_threshold", clip.event_model.contrast_threshold},
                 {"eps", clip.event_model.eps},
                 {"timestamp_jitter", clip.event_model.timestamp_jitter},
                 {"jitter_fraction", clip.event_model.jitter_fraction},
                 {"seed", clip.event_model.seed},
                 {"event_count", clip.events.size()},
                 {"scene", scene_to_json(clip.scene)}};
    const fs::path meta_path = dir / "meta.json";
    std::ofstream out(meta_path);
    if (!out) throw IoError("cannot write metadata", meta_path.string());
    out << meta.dump(2) << '\n';
  }
}

std::vector<DatasetClip> read_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory not found", root);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("clip_", 0) == 0) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<DatasetClip> clips;
  for (const auto& dir : dirs) {
    const fs::path meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) throw IoError("missing metadata", meta_path.string());
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw IoError(std::string("corrupt metadata (") + e.what() + ")", meta_path.string());
    }
    DatasetClip clip;
    try {
      const int channels = meta.at("channels").get<int>();
      const int frame_count = meta.at("frame_count").get<int>();
      clip.frame_times = meta.at("frame_times").get<std::vector<std::uint64_t>>();
      clip.keyframe_indices = meta.at("keyframe_indices").get<std::vector<int>>();
      clip.skip = meta.at("skip").get<int>();
      clip.event_model.contrast_threshold = meta.at("contrast_threshold").get<double>();
      clip.event_model.eps = meta.at("eps").get<double>();
      clip.event_model.timestamp_jitter = meta.value("timestamp_jitter", false);
      clip.event_model.jitter_fraction = meta.value("jitter_fraction", 0.5);
      clip.event_model.seed = meta.at("seed").get<std::uint64_t>();
      clip.scene = scene_from_json(meta.at("scene"));
      if (static_cast<int>(clip.frame_times.size()) != frame_count) {
        throw IntegrityError("frame_times length does not match frame_count in " + meta_path.string());
      }
      const int key_count = meta.at("keyframe_count").get<int>();
      if (static_cast<int>(clip.keyframe_indices.size()) != key_count) {
        throw IntegrityError("keyframe_indices length does not match keyframe_count in " + meta_path.string());
      }
      clip.ground_truth = read_video_frames(dir / "frames", frame_count, channels);
      clip.keyframes = read_video_frames(dir / "keyframes", key_count, channels);
      const SensorSize sensor{meta.at("sensor").at("width").get<int>(), meta.at("sensor").at("height").get<int>()};
      clip.events = read_events_file((dir / "events.evb").string(), sensor);
      if (clip.events.size() != meta.at("event_count").get<std::size_t>()) {
        throw IntegrityError("event count mismatch in " + meta_path.string());
      }
    } catch (const json::exception& e) {
      throw IoError(std::string("corrupt metadata (") + e.what() + ")", meta_path.string());
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace evdi
