#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "evdi/errors.hpp"
#include "evdi/simulator.hpp"

using namespace evdi;
namespace fs = std::filesystem;

namespace {

SceneSpec moving_square(double vx, double vy, std::uint64_t duration_us = 50000) {
  SceneSpec s;
  s.height = s.width = 32;
  SceneObject o;
  o.shape = ShapeKind::square;
  o.size = 4.0;
  o.trajectory = linear_trajectory(10.0, 12.0, vx, vy);
  s.objects.push_back(o);
  s.duration_us = duration_us;
  s.render_rate_hz = 1000.0;
  return s;
}

// Intensity-weighted centre of the pixels brighter than the background.
std::array<double, 2> excess_centroid(const Tensor& frames, int f, double background) {
  double sx = 0, sy = 0, m = 0;
  for (int y = 0; y < frames.dim(2); ++y)
    for (int x = 0; x < frames.dim(3); ++x) {
      const double w = frames.at(f, 0, y, x) - background;
      if (w <= 0) continue;
      sx += w * (x + 0.5);
      sy += w * (y + 0.5);
      m += w;
    }
  return {sx / m, sy / m};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("evdi_sim_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("static scene produces no events") {
    const SceneSpec s = moving_square(0.0, 0.0);
    const RenderedSequence seq = render_scene(s);
    CHECK(seq.frames.dim(0) == 51);
    CHECK(seq.timestamps[1] == 1000);
    CHECK(simulate_events(seq.frames, seq.timestamps, EventModelConfig{}).empty());
  }

  TEST_CASE("linear motion displaces the object by v*t") {
    const SceneSpec s = moving_square(100.0, -60.0);
    const RenderedSequence seq = render_scene(s);
    const auto c0 = excess_centroid(seq.frames, 0, s.background);
    CHECK(c0[0] == doctest::Approx(10.0).epsilon(0.01));
    CHECK(c0[1] == doctest::Approx(12.0).epsilon(0.01));
    for (int f : {10, 25, 50}) {
      const auto c = excess_centroid(seq.frames, f, s.background);
      const double t = f * 1e-3;
      // Coverage is sampled on a 4x4 grid per pixel, so edges snap to quarter pixels.
      CHECK(std::abs(c[0] - c0[0] - 100.0 * t) <= 0.25);
      CHECK(std::abs(c[1] - c0[1] + 60.0 * t) <= 0.25);
    }
  }

  TEST_CASE("bouncing objects stay inside the canvas") {
    SceneSpec s = moving_square(500.0, 350.0, 400000);
    s.objects[0].trajectory.kind = TrajectoryKind::bounce;
    for (int i = 0; i <= 400; ++i) {
      const auto p = trajectory_position(s.objects[0].trajectory, i * 1e-3, 2.0, 32, 32);
      CHECK(p[0] >= 2.0);
      CHECK(p[0] <= 30.0);
      CHECK(p[1] >= 2.0);
      CHECK(p[1] <= 30.0);
    }
    const RenderedSequence seq = render_scene(s);
    for (int f = 0; f < seq.frames.dim(0); f += 37) {
      const auto c = excess_centroid(seq.frames, f, s.background);
      CHECK(c[0] >= 1.9);
      CHECK(c[0] <= 30.1);
    }
  }

  TEST_CASE("a log step of exactly 2C emits two events of that sign") {
    const EventModelConfig cfg{};
    const double v0 = 0.2, v1 = (v0 + cfg.eps) * std::exp(2 * cfg.contrast_threshold) - cfg.eps;
    Tensor frames({2, 1, 2, 2}, v0);
    frames.at(1, 0, 1, 0) = v1;
    const EventStream up = simulate_events(frames, {0, 1000}, cfg);
    REQUIRE(up.size() == 2);
    for (const auto& r : up.records()) {
      CHECK(r.x == 0);
      CHECK(r.y == 1);
      CHECK(r.p == 1);
      CHECK(r.t > 0);
      CHECK(r.t <= 1000);
    }
    Tensor down({2, 1, 2, 2}, v1);
    down.at(1, 0, 0, 1) = v0;
    const EventStream dn = simulate_events(down, {0, 1000}, cfg);
    REQUIRE(dn.size() == 2);
    for (const auto& r : dn.records()) CHECK(r.p == -1);
  }

  TEST_CASE("event count is non-increasing in the contrast threshold") {
    const SceneSpec s = moving_square(120.0, 40.0);
    const RenderedSequence seq = render_scene(s);
    std::size_t prev = SIZE_MAX;
    for (double c : {0.05, 0.1, 0.2, 0.4, 0.8}) {
      EventModelConfig cfg;
      cfg.contrast_threshold = c;
      const std::size_t n = simulate_events(seq.frames, seq.timestamps, cfg).size();
      CHECK(n <= prev);
      prev = n;
    }
    CHECK(prev < SIZE_MAX);
  }

  TEST_CASE("make_clip samples the video grid and keeps events inside the clip") {
    SceneSpec s = moving_square(80.0, 0.0, 90000);
    s.video_stride = 10;
    const DatasetClip clip = make_clip(s, 3, 3);
    CHECK(clip.ground_truth.dim(0) == 9);
    CHECK(clip.frame_times.size() == 9);
    CHECK(clip.frame_times[1] - clip.frame_times[0] == 10000);
    CHECK(clip.keyframe_indices == std::vector<int>{0, 4, 8});
    const RenderedSequence dense = render_scene(s);
    for (int k = 0; k < 3; ++k) {
      const int v = clip.keyframe_indices[static_cast<std::size_t>(k)];
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          CHECK(clip.keyframes.at(k, 0, y, x) == clip.ground_truth.at(v, 0, y, x));
          CHECK(clip.ground_truth.at(v, 0, y, x) == dense.frames.at(v * 10, 0, y, x));
        }
    }
    REQUIRE_FALSE(clip.events.empty());
    for (const auto& r : clip.events.records()) {
      CHECK(r.t > clip.frame_times.front());
      CHECK(r.t <= clip.frame_times.back());
    }
    CHECK_THROWS_AS(make_clip(s, 4, 3), ArgumentError);
    CHECK_THROWS_AS(make_clip(s, 0, 1), ArgumentError);
  }

  TEST_CASE("scenes that move a pixel per render step are rejected") {
    const SceneSpec s = moving_square(1500.0, 0.0);
    CHECK_THROWS_AS(render_scene(s), ArgumentError);
  }

  TEST_CASE("datasets round-trip through disk") {
    const fs::path root = scratch("roundtrip");
    SceneSpec a = moving_square(60.0, 30.0, 40000);
    a.video_stride = 5;
    SceneSpec b = moving_square(-40.0, 70.0, 40000);
    b.video_stride = 5;
    b.seed = 3;
    EventModelConfig em;
    em.contrast_threshold = 0.15;
    em.seed = 4;
    const std::vector<DatasetClip> clips{make_clip(a, 1, 3, em), make_clip(b, 2, 2, em)};
    write_dataset(root.string(), clips);
    const auto back = read_dataset(root.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0] == clips[0]);
    CHECK(back[1] == clips[1]);
    fs::remove_all(root);
  }

  TEST_CASE("dataset reading reports missing and inconsistent data") {
    const fs::path empty = scratch("empty");
    fs::create_directories(empty);
    CHECK(read_dataset(empty.string()).empty());
    CHECK_THROWS_AS(read_dataset((empty / "nope").string()), IoError);

    const fs::path root = scratch("mismatch");
    write_dataset(root.string(), {make_clip(moving_square(60.0, 0.0, 20000), 1, 2)});
    fs::remove(root / "clip_0000" / "frames" / "0001.pgm");
    CHECK_THROWS_AS(read_dataset(root.string()), IntegrityError);
    fs::remove_all(root);
    fs::remove_all(empty);
  }
}
