#include "evdi/experiment.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "evdi/errors.hpp"
#include "evdi/metrics.hpp"

namespace evdi {

namespace {

double px_per_second(const DatasetConfig& cfg, double px_per_frame) {
  return px_per_frame * 1e6 / static_cast<double>(cfg.frame_interval_us);
}

// Bounce box for an axis so that motion at `v` (px/frame) from `c` turns
// around after `frames` frames; no wall on the trailing side.
void axis_box(double c, double v, double frames, double& lo, double& hi) {
  constexpr double kFar = 1e6;
  if (v > 0) {
    lo = c - kFar;
    hi = c + v * frames;
  } else if (v < 0) {
    lo = c + v * frames;
    hi = c + kFar;
  } else {
    lo = c - kFar;
    hi = c + kFar;
  }
}

SceneObject square(const DatasetConfig& cfg) {
  SceneObject o;
  o.shape = ShapeKind::square;
  o.size = cfg.object_size;
  o.intensity = cfg.intensity;
  o.color = {cfg.intensity, cfg.intensity, cfg.intensity};
  return o;
}

Trajectory out_and_back(const DatasetConfig& cfg, double cx, double cy, double heading, double speed,
                        double turn_frames) {
  Trajectory t;
  t.kind = TrajectoryKind::bounce;
  t.x0 = cx;
  t.y0 = cy;
  const double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
  t.vx = px_per_second(cfg, vx);
  t.vy = px_per_second(cfg, vy);
  axis_box(cx, vx, turn_frames, t.box_min_x, t.box_max_x);
  axis_box(cy, vy, turn_frames, t.box_min_y, t.box_max_y);
  return t;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SceneSpec base_scene(const DatasetConfig& cfg) {
  SceneSpec s;
  s.height = cfg.height;
  s.width = cfg.width;
  s.channels = cfg.channels;
  s.background = cfg.background;
  s.video_stride = cfg.video_stride;
  s.render_rate_hz = 1e6 * cfg.video_stride / static_cast<double>(cfg.frame_interval_us);
  s.duration_us = cfg.frame_interval_us * static_cast<std::uint64_t>(cfg.frames_per_clip() - 1);
  return s;
}

SceneSpec random_scene(const DatasetConfig& cfg, SceneFamily family, std::mt19937_64& rng) {
  SceneSpec s = base_scene(cfg);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double half = cfg.object_size / 2;
  const double cx = cfg.width / 2.0 + (unit(rng) - 0.5) * cfg.width / 4.0;
  const double cy = cfg.height / 2.0 + (unit(rng) - 0.5) * cfg.height / 4.0;
  const double heading = 2.0 * std::numbers::pi * unit(rng);
  const double speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * unit(rng);
  const double span = cfg.frames_per_clip() - 1;
  SceneObject o = square(cfg);
  if (family == SceneFamily::still || speed == 0.0) {
    o.trajectory = linear_trajectory(cx, cy, 0.0, 0.0);
  } else {
    // Furthest travel that keeps the square inside the canvas.
    const double dx = std::cos(heading), dy = std::sin(heading);
    double reach = 1e9;
    if (dx > 1e-9) reach = std::min(reach, (cfg.width - half - cx) / dx);
    if (dx < -1e-9) reach = std::min(reach, (half - cx) / dx);
    if (dy > 1e-9) reach = std::min(reach, (cfg.height - half - cy) / dy);
    if (dy < -1e-9) reach = std::min(reach, (half - cy) / dy);
    const double max_turn = std::min(span, reach / speed);
    const double min_turn = std::min(2.0, max_turn);
    const double turn = min_turn + (max_turn - min_turn) * unit(rng);
    o.trajectory = out_and_back(cfg, cx, cy, heading, speed, turn);
  }
  s.objects.push_back(o);
  s.seed = rng();
  return s;
}

std::vector<SceneSpec> ambiguous_scenes(const DatasetConfig& cfg) {
  std::vector<SceneSpec> out;
  const double span = cfg.frames_per_clip() - 1;
  const double speed = 0.5 * (cfg.speed_min + cfg.speed_max);
  for (int i = 0; i < cfg.directions; ++i) {
    SceneSpec s = base_scene(cfg);
    SceneObject o = square(cfg);
    const double heading = 2.0 * std::numbers::pi * i / cfg.directions;
    o.trajectory = out_and_back(cfg, cfg.width / 2.0, cfg.height / 2.0, heading, speed, span / 2.0);
    s.objects.push_back(o);
    s.seed = static_cast<std::uint64_t>(i);
    out.push_back(s);
  }
  return out;
}

std::vector<DatasetClip> simulate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  std::vector<DatasetClip> clips;
  if (cfg.family == SceneFamily::ambiguous) {
    for (const SceneSpec& s : ambiguous_scenes(cfg)) clips.push_back(make_clip(s, cfg.skip, cfg.keyframes, cfg.events));
    return clips;
  }
  std::mt19937_64 rng(seed);
  for (int i = 0; i < cfg.clips; ++i) {
    const SceneSpec s = random_scene(cfg, cfg.family, rng);
    EventModelConfig em = cfg.events;
    em.seed = cfg.events.seed + static_cast<std::uint64_t>(i);
    clips.push_back(make_clip(s, cfg.skip, cfg.keyframes, em));
  }
  return clips;
}

TrainingClip training_clip(const DatasetClip& clip, const RunConfig& cfg, bool reversed) {
  const int frames = cfg.frames;
  if (clip.ground_truth.dim(0) < frames) {
    throw ArgumentError("training clip has " + std::to_string(clip.ground_truth.dim(0)) + " frames, model needs " +
                        std::to_string(frames));
  }
  std::vector<Tensor> images;
  std::vector<std::uint64_t> times(clip.frame_times.begin(), clip.frame_times.begin() + frames);
  for (int f = 0; f < frames; ++f) images.push_back(frame_image(clip.ground_truth, f));
  EventStream events = slice_events(clip.events, times.front(), times.back());
  if (reversed) {
    std::reverse(images.begin(), images.end());
    events = backward_events(events, times.back(), cfg.sampling.negate_backward_polarity);
    times = backward_frame_times(times);
  }
  TrainingClip out;
  out.x0 = encode_video(stack_frames(images), cfg.codec);
  out.i_cond = image_condition(images.front(), frames, cfg.codec);
  out.events = event_stack_video(events, times, cfg.stacker, cfg.codec);
  return out;
}

std::vector<TrainingClip> training_clips(const std::vector<DatasetClip>& clips, const RunConfig& cfg,
                                         bool with_reversed) {
  std::vector<TrainingClip> out;
  for (const DatasetClip& c : clips) {
    out.push_back(training_clip(c, cfg, false));
    if (with_reversed) out.push_back(training_clip(c, cfg, true));
  }
  return out;
}

Tensor linear_blend(const Tensor& start, const Tensor& end, int frames) {
  require_same_shape(start, end, "linear_blend");
  if (frames < 1) throw ArgumentError("linear_blend: frames must be >= 1");
  std::vector<Tensor> out;
  for (int f = 0; f < frames; ++f) {
    const double w = frames == 1 ? 0.0 : static_cast<double>(f) / (frames - 1);
    out.push_back((1.0 - w) * start + w * end);
  }
  return stack_frames(out);
}

std::optional<std::array<double, 2>> object_centroid(const Tensor& image, double threshold) {
  if (image.rank() != 3) throw ArgumentError("object_centroid: expected [C,H,W]");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  double sw = 0, sx = 0, sy = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = 0;
      for (int c = 0; c < C; ++c) v += image.at(c, y, x);
      v /= C;
      if (v <= threshold) continue;
      const double w = v - threshold;
      sw += w;
      sx += w * (x + 0.5);
      sy += w * (y + 0.5);
    }
  if (sw <= 0) return std::nullopt;
  return std::array<double, 2>{sx / sw, sy / sw};
}

std::array<double, 2> scene_center(const SceneSpec& scene, double t_seconds) {
  if (scene.objects.empty()) throw ArgumentError("scene_center: scene has no objects");
  const SceneObject& o = scene.objects.front();
  return trajectory_position(o.trajectory, t_seconds, o.size / 2, scene.width, scene.height);
}

Pipeline make_pipeline(const Denoiser& model, const ControlBranch* branch, const RunConfig& cfg) {
  Pipeline p;
  p.model = &model;
  if (branch) p.encoder = [branch](const Tensor& stacks) { return branch->encode_events(stacks, nullptr); };
  p.latent_channels = cfg.codec.latent_channels(cfg.dataset.channels);
  p.codec = cfg.codec;
  p.stacker = cfg.stacker;
  p.schedule = cfg.schedule();
  p.sampling = cfg.sampling;
  return p;
}

nlohmann::json SuiteResult::to_json() const {
  nlohmann::json clips = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    clips.push_back({{"name", names[i]},
                     {"psnr_events", psnr_events[i]},
                     {"psnr_zero_events", psnr_zero[i]},
                     {"psnr_linear_blend", psnr_blend[i]},
                     {"centroid_error_events_px", centroid_events[i]},
                     {"centroid_error_zero_events_px", centroid_zero[i]}});
  }
  return {{"clips", clips},
          {"mean_psnr_events", mean_psnr_events},
          {"mean_psnr_zero_events", mean_psnr_zero},
          {"mean_psnr_linear_blend", mean_psnr_blend},
          {"mean_centroid_error_events_px", mean_centroid_events},
          {"mean_centroid_error_zero_events_px", mean_centroid_zero}};
}

SuiteResult evaluate_suite(const AdaptedModel& model, const std::vector<DatasetClip>& suite, const RunConfig& cfg) {
  SuiteResult r;
  const double threshold = 0.5 * (cfg.dataset.background + cfg.dataset.intensity);
  const double miss = std::hypot(cfg.dataset.width, cfg.dataset.height);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const DatasetClip& clip = suite[i];
    const int frames = cfg.frames;
    if (clip.ground_truth.dim(0) != frames) throw ArgumentError("evaluate_suite: clip length differs from model F");
    const Tensor start = frame_image(clip.ground_truth, 0);
    const Tensor end = frame_image(clip.ground_truth, frames - 1);

    Pipeline p = make_pipeline(model, &model.branch(), cfg);
    p.sampling.seed = cfg.sampling.seed + i;
    const Tensor with_events = interpolate(p, start, end, clip.events, clip.frame_times);
    p.sampling.zero_events = true;
    const Tensor zeroed = interpolate(p, start, end, clip.events, clip.frame_times);
    const Tensor blend = linear_blend(start, end, frames);

    std::vector<double> pe, pz, pb, ce, cz;
    for (int f = 1; f + 1 < frames; ++f) {
      const Tensor gt = frame_image(clip.ground_truth, f);
      pe.push_back(psnr(frame_image(with_events, f), gt));
      pz.push_back(psnr(frame_image(zeroed, f), gt));
      pb.push_back(psnr(frame_image(blend, f), gt));
      const auto truth = scene_center(clip.scene, static_cast<double>(clip.frame_times[static_cast<std::size_t>(f)]) * 1e-6);
      auto err = [&](const Tensor& video) {
        const auto c = object_centroid(frame_image(video, f), threshold);
        return c ? std::hypot((*c)[0] - truth[0], (*c)[1] - truth[1]) : miss;
      };
      ce.push_back(err(with_events));
      cz.push_back(err(zeroed));
    }
    r.names.push_back("heading_" + std::to_string(i));
    r.psnr_events.push_back(mean(pe));
    r.psnr_zero.push_back(mean(pz));
    r.psnr_blend.push_back(mean(pb));
    r.centroid_events.push_back(mean(ce));
    r.centroid_zero.push_back(mean(cz));
    r.outputs_events.push_back(with_events);
    r.outputs_zero.push_back(zeroed);
    r.outputs_blend.push_back(blend);
  }
  r.mean_psnr_events = mean(r.psnr_events);
  r.mean_psnr_zero = mean(r.psnr_zero);
  r.mean_psnr_blend = mean(r.psnr_blend);
  r.mean_centroid_events = mean(r.centroid_events);
  r.mean_centroid_zero = mean(r.centroid_zero);
  return r;
}

nlohmann::json ControlExperiment::to_json() const {
  return {{"pretrain_seconds", pretrain_seconds},
          {"adapt_seconds", adapt_seconds},
          {"eval_seconds", eval_seconds},
          {"pretrain_steps", pretrain_losses.size()},
          {"adapt_steps", adapt_losses.size()},
          {"pretrain_final_smoothed_loss", smooth_curve(pretrain_losses).empty() ? 0.0 : smooth_curve(pretrain_losses).back()},
          {"adapt_final_smoothed_loss", smooth_curve(adapt_losses).empty() ? 0.0 : smooth_curve(adapt_losses).back()},
          {"validation_loss_base", val_base},
          {"validation_loss_adapted", val_adapted},
          {"validation_loss_zero_events", val_zero_events},
          {"suite", suite.to_json()}};
}

RunConfig control_experiment_config() {
  RunConfig c;
  c.seed = 7;
  c.frames = 9;
  c.codec.kind = CodecKind::lossless_rearrange;
  c.codec.d = 4;
  c.codec.u = 1;
  c.stacker.stacks = 3;
  c.sampling.tile = 8;
  c.sampling.overlap = 4;
  c.dataset.family = SceneFamily::random;
  c.dataset.clips = 256;
  c.dataset.skip = 7;
  c.dataset.keyframes = 2;
  c.dataset.directions = 4;
  c.pretrain.steps = 2000;
  c.pretrain.batch = 16;
  c.pretrain.lr = 2e-3;
  c.pretrain.seed = 11;
  c.adapt.steps = 2000;
  c.adapt.batch = 16;
  c.adapt.lr = 2e-3;
  c.adapt.seed = 13;
  c.model.seed = 5;
  c.validate();
  return c;
}

ControlExperiment run_control_experiment(const RunConfig& cfg, const LogFn& log,
                                         std::optional<AdaptedModel>* model_out) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  ControlExperiment out;
  const NoiseSchedule schedule = cfg.schedule();

  DatasetConfig train_cfg = cfg.dataset;
  train_cfg.family = SceneFamily::random;
  const auto train_clips = simulate_dataset(train_cfg, cfg.seed);
  const auto train = training_clips(train_clips, cfg, true);
  DatasetConfig suite_cfg = cfg.dataset;
  suite_cfg.family = SceneFamily::ambiguous;
  const auto suite = simulate_dataset(suite_cfg, cfg.seed);
  const auto suite_train = training_clips(suite, cfg, false);
  say("simulated " + std::to_string(train_clips.size()) + " training clips, " + std::to_string(suite.size()) +
      " ambiguous clips");

  BaseDenoiser base(cfg.resolved_model());
  auto t0 = std::chrono::steady_clock::now();
  TrainState pre_state(base.params(), cfg.pretrain);
  pretrain_base(base, train, cfg.pretrain, schedule, pre_state, [&](int step, double loss) {
    if (step % 250 == 0) say("pretrain step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  out.pretrain_seconds = seconds_since(t0);
  out.pretrain_losses = pre_state.losses;

  AdaptedModel model(std::move(base));
  t0 = std::chrono::steady_clock::now();
  TrainState ad_state(model.branch().params(), cfg.adapt);
  train_adapter(model, train, cfg.adapt, schedule, ad_state, [&](int step, double loss) {
    if (step % 250 == 0) say("adapt step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  out.adapt_seconds = seconds_since(t0);
  out.adapt_losses = ad_state.losses;

  t0 = std::chrono::steady_clock::now();
  const std::uint64_t vseed = cfg.seed + 1000;
  out.val_base = validation_loss(model.base(), nullptr, suite_train, schedule, vseed, 16, false);
  out.val_adapted = validation_loss(model.base(), &model.branch(), suite_train, schedule, vseed, 16, false);
  out.val_zero_events = validation_loss(model.base(), &model.branch(), suite_train, schedule, vseed, 16, true);
  out.suite = evaluate_suite(model, suite, cfg);
  out.eval_seconds = seconds_since(t0);
  say("evaluation done");
  if (model_out) model_out->emplace(std::move(model));
  return out;
}

}  // namespace evdi
