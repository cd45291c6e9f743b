#include "evdi/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "evdi/errors.hpp"
#include "evdi/parallel.hpp"

namespace evdi {

namespace {

std::vector<int> tile_positions(int canvas, int tile, int stride, int offset) {
  std::vector<int> p;
  if (offset > 0) p.push_back(0);
  for (int q = offset; q + tile < canvas; q += stride) p.push_back(q);
  p.push_back(canvas - tile);
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  return p;
}

}  // namespace

TileGrid make_tile_grid(int canvas_h, int canvas_w, int tile_h, int tile_w, int overlap, int offset) {
  if (canvas_h < 1 || canvas_w < 1) throw ArgumentError("tile grid: empty canvas");
  if (tile_h < 1 || tile_w < 1) throw ArgumentError("tile grid: tile extent must be >= 1");
  if (tile_h > canvas_h || tile_w > canvas_w) {
    throw ArgumentError("tile grid: tile " + std::to_string(tile_h) + "x" + std::to_string(tile_w) +
                        " exceeds canvas " + std::to_string(canvas_h) + "x" + std::to_string(canvas_w));
  }
  if (overlap < 0 || overlap >= std::min(tile_h, tile_w)) throw ArgumentError("tile grid: need 0 <= overlap < tile");
  if (offset < 0 || offset >= std::min(tile_h, tile_w) - overlap) {
    throw ArgumentError("tile grid: offset must lie in [0, tile - overlap)");
  }
  TileGrid g{canvas_h, canvas_w, tile_h, tile_w, overlap, {}};
  const auto ys = tile_positions(canvas_h, tile_h, tile_h - overlap, std::min(offset, canvas_h - tile_h));
  const auto xs = tile_positions(canvas_w, tile_w, tile_w - overlap, std::min(offset, canvas_w - tile_w));
  for (int y : ys)
    for (int x : xs) g.tiles.push_back({y, x, tile_h, tile_w});
  return g;
}

std::vector<Tensor> uniform_tile_weights(const TileGrid& grid) {
  return std::vector<Tensor>(grid.tiles.size(), Tensor({grid.tile_h, grid.tile_w}, 1.0));
}

std::vector<Tensor> feathered_tile_weights(const TileGrid& grid) {
  const double band = grid.overlap + 1.0;
  Tensor w({grid.tile_h, grid.tile_w});
  for (int y = 0; y < grid.tile_h; ++y)
    for (int x = 0; x < grid.tile_w; ++x) {
      const int edge = std::min({y + 1, grid.tile_h - y, x + 1, grid.tile_w - x});
      w[static_cast<std::size_t>(y * grid.tile_w + x)] = std::min(1.0, edge / band);
    }
  return std::vector<Tensor>(grid.tiles.size(), w);
}

Tensor fuse_tiles(const std::vector<Tensor>& tile_latents, const TileGrid& grid, const std::vector<Tensor>& weights) {
  if (tile_latents.size() != grid.tiles.size()) {
    throw ArgumentError("fuse_tiles: " + std::to_string(tile_latents.size()) + " latents for " +
                        std::to_string(grid.tiles.size()) + " tiles");
  }
  if (tile_latents.empty()) throw ArgumentError("fuse_tiles: no tiles");
  if (!weights.empty() && weights.size() != grid.tiles.size()) throw ArgumentError("fuse_tiles: weight count mismatch");
  const int frames = tile_latents[0].dim(0), channels = tile_latents[0].dim(1);
  for (std::size_t i = 0; i < tile_latents.size(); ++i) {
    const Tensor& t = tile_latents[i];
    const TileRect& r = grid.tiles[i];
    if (t.rank() != 4 || t.dim(0) != frames || t.dim(1) != channels || t.dim(2) != r.h || t.dim(3) != r.w) {
      throw ArgumentError("fuse_tiles: tile " + std::to_string(i) + " has shape " + t.shape_string());
    }
    if (!weights.empty()) {
      const Tensor& w = weights[i];
      if (w.rank() != 2 || w.dim(0) != r.h || w.dim(1) != r.w) throw ArgumentError("fuse_tiles: weight shape mismatch");
      for (double v : w.values())
        if (!(v >= 0.0) || !std::isfinite(v)) throw WeightError("fuse_tiles: weights must be finite and non-negative");
    }
  }

  const int H = grid.canvas_h, W = grid.canvas_w;
  auto weight_at = [&](std::size_t i, int y, int x) {
    return weights.empty() ? 1.0 : weights[i][static_cast<std::size_t>(y * grid.tiles[i].w + x)];
  };
  std::vector<double> total(static_cast<std::size_t>(H) * W, 0.0);
  std::vector<int> cover(static_cast<std::size_t>(H) * W, 0);
  std::vector<int> sole(static_cast<std::size_t>(H) * W, -1);
  for (std::size_t i = 0; i < grid.tiles.size(); ++i) {
    const TileRect& r = grid.tiles[i];
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) {
        const auto c = static_cast<std::size_t>((r.y + y) * W + r.x + x);
        total[c] += weight_at(i, y, x);
        ++cover[c];
        sole[c] = static_cast<int>(i);
      }
  }
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (cover[c] == 0 || !(total[c] > 0.0)) {
      throw WeightError("fuse_tiles: zero total weight at cell (" + std::to_string(c / W) + ", " +
                        std::to_string(c % W) + ")");
    }
  }

  Tensor out({frames, channels, H, W});
  for (std::size_t i = 0; i < grid.tiles.size(); ++i) {
    const TileRect& r = grid.tiles[i];
    const Tensor& t = tile_latents[i];
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) {
        const auto c = static_cast<std::size_t>((r.y + y) * W + r.x + x);
        if (cover[c] == 1) {
          for (int f = 0; f < frames; ++f)
            for (int ch = 0; ch < channels; ++ch) out.at(f, ch, r.y + y, r.x + x) = t.at(f, ch, y, x);
          continue;
        }
        const double w = weight_at(i, y, x) / total[c];
        for (int f = 0; f < frames; ++f)
          for (int ch = 0; ch < channels; ++ch) out.at(f, ch, r.y + y, r.x + x) += w * t.at(f, ch, y, x);
      }
  }
  return out;
}

Tensor flip_temporal(const Tensor& latent) {
  if (latent.rank() != 4) throw ArgumentError("flip_temporal: expected [F,C,H,W], got " + latent.shape_string());
  Tensor out(latent.shape());
  const int frames = latent.dim(0);
  const std::size_t stride = latent.frame_stride();
  for (int f = 0; f < frames; ++f) {
    std::copy_n(latent.frame(frames - 1 - f), stride, out.frame(f));
  }
  return out;
}

std::vector<double> frame_fusion_weights(int frames, WeightOrientation orientation) {
  if (frames < 1) throw ArgumentError("frame_fusion_weights: frames must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(frames), 1.0);
  if (frames == 1) return w;
  for (int f = 0; f < frames; ++f) {
    const double r = static_cast<double>(f) / (frames - 1);
    w[static_cast<std::size_t>(f)] = orientation == WeightOrientation::start_heavy ? 1.0 - r : r;
  }
  return w;
}

Tensor two_side_fuse(const Tensor& z_s, const Tensor& z_e, const std::vector<double>& w_f) {
  require_same_shape(z_s, z_e, "two_side_fuse");
  if (z_s.rank() != 4) throw ArgumentError("two_side_fuse: expected [F,C,H,W]");
  const int frames = z_s.dim(0);
  if (static_cast<int>(w_f.size()) != frames) {
    throw ArgumentError("two_side_fuse: " + std::to_string(w_f.size()) + " weights for " + std::to_string(frames) +
                        " frames");
  }
  const Tensor back = flip_temporal(z_e);
  Tensor out(z_s.shape());
  const std::size_t stride = z_s.frame_stride();
  for (int f = 0; f < frames; ++f) {
    const double w = w_f[static_cast<std::size_t>(f)];
    if (!(w >= 0.0 && w <= 1.0)) throw ArgumentError("two_side_fuse: weights must lie in [0, 1]");
    const double* s = z_s.frame(f);
    const double* e = back.frame(f);
    double* o = out.frame(f);
    if (w == 1.0) {
      std::copy_n(s, stride, o);
    } else if (w == 0.0) {
      std::copy_n(e, stride, o);
    } else {
      for (std::size_t i = 0; i < stride; ++i) o[i] = w * s[i] + (1.0 - w) * e[i];
    }
  }
  return out;
}

Tensor anchored_ddim_step(const Tensor& z, const Tensor& eps_hat, int k, const NoiseSchedule& schedule,
                          const Tensor& anchor) {
  Tensor out = ddim_step(z, eps_hat, k, schedule);
  if (anchor.empty()) return out;
  if (anchor.rank() != 4 || anchor.dim(0) != 1 || anchor.dim(1) != z.dim(1) || anchor.dim(2) != z.dim(2) ||
      anchor.dim(3) != z.dim(3)) {
    throw ArgumentError("anchored_ddim_step: anchor " + anchor.shape_string() + " vs latent " + z.shape_string());
  }
  const auto ks = static_cast<std::size_t>(k);
  const double a = schedule.alpha[ks], s = schedule.sigma[ks];
  const double a_prev = schedule.alpha[ks - 1], s_prev = schedule.sigma[ks - 1];
  const double* zf = z.frame(0);
  const double* x0 = anchor.frame(0);
  double* o = out.frame(0);
  for (std::size_t i = 0; i < z.frame_stride(); ++i) {
    const double eps = (zf[i] - a * x0[i]) / s;
    o[i] = a_prev * x0[i] + s_prev * eps;
  }
  return out;
}

Tensor per_tile_evds(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond, const Denoiser& model,
                     const TileGrid& grid, const std::vector<Tensor>& weights, const NoiseSchedule& schedule,
                     bool anchor, int threads) {
  require_same_shape(z, i_cond, "per_tile_evds: Z_k vs I_cond");
  if (z.dim(2) != grid.canvas_h || z.dim(3) != grid.canvas_w) {
    throw ArgumentError("per_tile_evds: latent " + z.shape_string() + " does not match the tile grid canvas");
  }
  std::vector<Tensor> tiles(grid.tiles.size());
  parallel_for(grid.tiles.size(), threads, [&](std::size_t i) {
    const TileRect& r = grid.tiles[i];
    const Tensor zt = crop(z, r.y, r.x, r.h, r.w);
    const Tensor it = crop(i_cond, r.y, r.x, r.h, r.w);
    const Tensor et = e_cond.empty() ? Tensor() : crop(e_cond, r.y, r.x, r.h, r.w);
    const Tensor eps = model.predict_noise(zt, k, it, et);
    tiles[i] = anchor ? anchored_ddim_step(zt, eps, k, schedule, take_frame(it, 0)) : ddim_step(zt, eps, k, schedule);
  });
  return fuse_tiles(tiles, grid, weights);
}

// ---------------------------------------------------------------------------
// Conditioning

Tensor encode_video(const Tensor& video, const CodecConfig& codec) {
  validate(codec);
  return encode(codec.u == 1 ? video : upsample_bilinear(video, codec.u), codec);
}

Tensor decode_video(const Tensor& latent, const CodecConfig& codec, int channels, FrameSize size) {
  validate(codec);
  const Tensor up = decode(latent, codec, channels, {size.height * codec.u, size.width * codec.u});
  return codec.u == 1 ? up : downsample_area(up, codec.u);
}

Tensor image_condition(const Tensor& image, int frames, const CodecConfig& codec) {
  if (image.rank() != 3) throw ArgumentError("image_condition: expected [C,H,W], got " + image.shape_string());
  const Tensor latent = encode_video(stack_frames({image}), codec);
  std::vector<Tensor> copies(static_cast<std::size_t>(frames), frame_image(latent, 0));
  return stack_frames(copies);
}

Tensor event_stack_video(const EventStream& events, const std::vector<std::uint64_t>& frame_times,
                         const StackerConfig& stacker, const CodecConfig& codec) {
  validate(codec);
  const Tensor stacks = stack_frames(build_control_sequence(events, frame_times, stacker));
  const Tensor up = codec.u == 1 ? stacks : upsample_bilinear(stacks, codec.u);
  return pad_to_multiple(up, codec.d);
}

EventStream backward_events(const EventStream& events, std::uint64_t t_end, bool negate_polarity) {
  return reverse_time(events, t_end, negate_polarity);
}

std::vector<std::uint64_t> backward_frame_times(const std::vector<std::uint64_t>& frame_times) {
  if (frame_times.empty()) return {};
  const std::uint64_t t_end = frame_times.back();
  std::vector<std::uint64_t> out;
  for (auto it = frame_times.rbegin(); it != frame_times.rend(); ++it) out.push_back(t_end - *it);
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

nlohmann::json SamplingConfig::to_json() const {
  return {{"tile", tile},
          {"overlap", overlap},
          {"grid_offset", grid_offset},
          {"feather", feather},
          {"orientation", orientation == WeightOrientation::start_heavy ? "start_heavy" : "literal"},
          {"forward_weights", forward_weights},
          {"anchor_first_frame", anchor_first_frame},
          {"negate_backward_polarity", negate_backward_polarity},
          {"zero_events", zero_events},
          {"seed", seed},
          {"threads", threads}};
}

SamplingConfig SamplingConfig::from_json(const nlohmann::json& j) {
  SamplingConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("sampling.") + key + ": wrong type");
    }
  };
  get("tile", c.tile);
  get("overlap", c.overlap);
  get("grid_offset", c.grid_offset);
  get("feather", c.feather);
  get("forward_weights", c.forward_weights);
  get("anchor_first_frame", c.anchor_first_frame);
  get("negate_backward_polarity", c.negate_backward_polarity);
  get("zero_events", c.zero_events);
  get("seed", c.seed);
  get("threads", c.threads);
  if (j.contains("orientation")) {
    const std::string o = j.at("orientation").is_string() ? j.at("orientation").get<std::string>() : "";
    if (o == "start_heavy") c.orientation = WeightOrientation::start_heavy;
    else if (o == "literal") c.orientation = WeightOrientation::literal;
    else throw ConfigError("sampling.orientation must be \"start_heavy\" or \"literal\"");
  }
  if (c.tile < 1) throw ConfigError("sampling.tile must be >= 1");
  if (c.overlap < 0 || c.overlap >= c.tile) throw ConfigError("sampling.overlap must lie in [0, tile)");
  if (c.grid_offset < 0) throw ConfigError("sampling.grid_offset must be >= 0");
  for (double w : c.forward_weights)
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("sampling.forward_weights must lie in [0, 1]");
  return c;
}

namespace {

struct Branch {
  Tensor i_cond;
  Tensor e_cond;
};

Branch condition(const Pipeline& p, const Tensor& image, const EventStream& events,
                 const std::vector<std::uint64_t>& frame_times) {
  const int frames = static_cast<int>(frame_times.size());
  Branch b;
  b.i_cond = image_condition(image, frames, p.codec);
  if (p.encoder) {
    Tensor stacks = event_stack_video(events, frame_times, p.stacker, p.codec);
    if (p.sampling.zero_events) stacks.fill(0.0);
    b.e_cond = p.encoder(stacks);
  }
  return b;
}

struct Canvas {
  TileGrid grid;
  std::vector<Tensor> weights;
};

Canvas canvas_for(const Pipeline& p, const Tensor& latent) {
  const int h = latent.dim(2), w = latent.dim(3);
  const int th = std::min(p.sampling.tile, h), tw = std::min(p.sampling.tile, w);
  const int overlap = std::min(p.sampling.overlap, std::max(std::min(th, tw) - 1, 0));
  const int span = std::min(th, tw) - overlap;
  Canvas c;
  c.grid = make_tile_grid(h, w, th, tw, overlap, p.sampling.grid_offset % std::max(span, 1));
  c.weights = p.sampling.feather ? feathered_tile_weights(c.grid) : uniform_tile_weights(c.grid);
  return c;
}

void check_inputs(const Pipeline& p, const Tensor& image, const std::vector<std::uint64_t>& frame_times) {
  if (!p.model) throw ArgumentError("pipeline: no model");
  if (frame_times.empty()) throw ArgumentError("pipeline: need at least one frame time");
  if (image.rank() != 3) throw ArgumentError("pipeline: conditioning image must be [C,H,W]");
  for (std::size_t i = 1; i < frame_times.size(); ++i)
    if (frame_times[i] <= frame_times[i - 1]) throw OrderingError("pipeline: frame times must increase");
}

}  // namespace

Tensor generate(const Pipeline& p, const Tensor& start, const EventStream& events,
                const std::vector<std::uint64_t>& frame_times) {
  check_inputs(p, start, frame_times);
  const Branch fwd = condition(p, start, events, frame_times);
  const Canvas canvas = canvas_for(p, fwd.i_cond);
  std::mt19937_64 rng(p.sampling.seed);
  Tensor z = standard_normal(fwd.i_cond.shape(), rng);
  for (int k = p.schedule.steps; k >= 1; --k) {
    z = per_tile_evds(z, k, fwd.i_cond, fwd.e_cond, *p.model, canvas.grid, canvas.weights, p.schedule,
                      p.sampling.anchor_first_frame, p.sampling.threads);
  }
  return decode_video(z, p.codec, start.dim(0), {start.dim(1), start.dim(2)});
}

Tensor interpolate(const Pipeline& p, const Tensor& start, const Tensor& end, const EventStream& events,
                   const std::vector<std::uint64_t>& frame_times) {
  check_inputs(p, start, frame_times);
  if (!start.same_shape(end)) throw ArgumentError("interpolate: start and end images differ in shape");
  const int frames = static_cast<int>(frame_times.size());
  const Branch fwd = condition(p, start, events, frame_times);
  const Branch bwd = condition(p, end, backward_events(events, frame_times.back(), p.sampling.negate_backward_polarity),
                               backward_frame_times(frame_times));
  const Canvas canvas = canvas_for(p, fwd.i_cond);
  std::vector<double> w_f = p.sampling.forward_weights.empty()
                                ? frame_fusion_weights(frames, p.sampling.orientation)
                                : p.sampling.forward_weights;
  std::mt19937_64 rng(p.sampling.seed);
  Tensor z = standard_normal(fwd.i_cond.shape(), rng);
  const int inner = std::max(1, p.sampling.threads / 2);
  for (int k = p.schedule.steps; k >= 1; --k) {
    Tensor z_s, z_e;
    const Tensor flipped = flip_temporal(z);
    parallel_for(2, std::min(p.sampling.threads, 2), [&](std::size_t side) {
      if (side == 0) {
        z_s = per_tile_evds(z, k, fwd.i_cond, fwd.e_cond, *p.model, canvas.grid, canvas.weights, p.schedule,
                            p.sampling.anchor_first_frame, inner);
      } else {
        z_e = per_tile_evds(flipped, k, bwd.i_cond, bwd.e_cond, *p.model, canvas.grid, canvas.weights, p.schedule,
                            p.sampling.anchor_first_frame, inner);
      }
    });
    z = two_side_fuse(z_s, z_e, w_f);
  }
  return decode_video(z, p.codec, start.dim(0), {start.dim(1), start.dim(2)});
}

}  // namespace evdi
