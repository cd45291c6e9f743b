#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evdi/codec.hpp"
#include "evdi/diffusion.hpp"
#include "evdi/events.hpp"
#include "evdi/stacker.hpp"
#include "evdi/tensor.hpp"
#include "json.hpp"

namespace evdi {

struct TileRect {
  int y = 0, x = 0, h = 0, w = 0;
  bool operator==(const TileRect&) const = default;
};

// Tiles over a latent canvas, row-major.
struct TileGrid {
  int canvas_h = 0, canvas_w = 0;
  int tile_h = 0, tile_w = 0;
  int overlap = 0;
  std::vector<TileRect> tiles;
};

// Tiles start at `offset` (plus a tile at 0 when offset > 0) and advance by
// tile - overlap; the last row/column is shifted inward to end at the canvas
// edge. Tile extents larger than the canvas are an error.
TileGrid make_tile_grid(int canvas_h, int canvas_w, int tile_h, int tile_w, int overlap, int offset = 0);

// Per-tile [th, tw] weights (shared across frames). Uniform is all ones;
// feathered ramps linearly towards tile borders inside the overlap band.
std::vector<Tensor> uniform_tile_weights(const TileGrid& grid);
std::vector<Tensor> feathered_tile_weights(const TileGrid& grid);

// Normalized weighted sum of tile latents on the canvas. Cells covered by a
// single tile copy it unchanged. Empty `weights` means uniform.
Tensor fuse_tiles(const std::vector<Tensor>& tile_latents, const TileGrid& grid, const std::vector<Tensor>& weights = {});

// Frame f -> frame F-1-f.
Tensor flip_temporal(const Tensor& latent);

enum class WeightOrientation { start_heavy, literal };

// start_heavy: w[f] = 1 - f/(F-1); literal: w[f] = f/(F-1). F = 1 gives {1}.
std::vector<double> frame_fusion_weights(int frames, WeightOrientation orientation);

// W_f * Z_s + (1 - W_f) * flip(Z_e), per-frame broadcast.
Tensor two_side_fuse(const Tensor& z_s, const Tensor& z_e, const std::vector<double>& w_f);

// DDIM step whose clean estimate for frame 0 is replaced by `anchor`
// ([1, C, h, w]); the noise estimate is made consistent with the replacement.
Tensor anchored_ddim_step(const Tensor& z, const Tensor& eps_hat, int k, const NoiseSchedule& schedule,
                          const Tensor& anchor);

struct SamplingConfig {
  int tile = 16;    // latent units; clamped to the canvas
  int overlap = 8;
  int grid_offset = 0;
  bool feather = false;
  WeightOrientation orientation = WeightOrientation::start_heavy;
  std::vector<double> forward_weights;  // overrides orientation when non-empty
  bool anchor_first_frame = true;
  bool negate_backward_polarity = true;
  bool zero_events = false;
  std::uint64_t seed = 0;
  int threads = 1;

  nlohmann::json to_json() const;
  static SamplingConfig from_json(const nlohmann::json& j);
};

// One denoising update over the tiled canvas: crop Z_k, I_cond, E_cond per
// tile, predict noise, step, and fuse. `anchor` (may be empty) is the full
// canvas latent of the conditioning frame.
Tensor per_tile_evds(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond, const Denoiser& model,
                     const TileGrid& grid, const std::vector<Tensor>& weights, const NoiseSchedule& schedule,
                     bool anchor, int threads);

// Pixel video -> latent video through the pre-encode upsampling.
Tensor encode_video(const Tensor& video, const CodecConfig& codec);
// Latent video -> pixel video at the original resolution.
Tensor decode_video(const Tensor& latent, const CodecConfig& codec, int channels, FrameSize size);
// Conditioning image [C,H,W] -> latent replicated over `frames`.
Tensor image_condition(const Tensor& image, int frames, const CodecConfig& codec);
// Per-frame multistack video at codec input resolution: [F, 2S, ceil(H*u/d)*d, ...].
Tensor event_stack_video(const EventStream& events, const std::vector<std::uint64_t>& frame_times,
                         const StackerConfig& stacker, const CodecConfig& codec);
// Events and frame times as seen by the backward branch.
EventStream backward_events(const EventStream& events, std::uint64_t t_end, bool negate_polarity);
std::vector<std::uint64_t> backward_frame_times(const std::vector<std::uint64_t>& frame_times);

using EventEncoder = std::function<Tensor(const Tensor& stacks)>;

struct Pipeline {
  const Denoiser* model = nullptr;
  EventEncoder encoder;  // null: E_cond is left empty
  int latent_channels = 0;
  CodecConfig codec;
  StackerConfig stacker;
  NoiseSchedule schedule;
  SamplingConfig sampling;
};

// F frames from the start image and forward events; frame_times has length F.
Tensor generate(const Pipeline& p, const Tensor& start, const EventStream& events,
                const std::vector<std::uint64_t>& frame_times);

// F frames between start and end on one shared latent chain with two-side
// fusion at every step.
Tensor interpolate(const Pipeline& p, const Tensor& start, const Tensor& end, const EventStream& events,
                   const std::vector<std::uint64_t>& frame_times);

}  // namespace evdi
