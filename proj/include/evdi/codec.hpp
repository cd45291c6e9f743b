#pragma once

#include "evdi/tensor.hpp"

namespace evdi {

enum class CodecKind { lossless_rearrange, lossy_pool };

struct CodecConfig {
  CodecKind kind = CodecKind::lossless_rearrange;
  int d = 4;  // spatial downsample factor
  int u = 1;  // pre-encode upsample factor

  int latent_channels(int pixel_channels) const {
    return kind == CodecKind::lossless_rearrange ? pixel_channels * d * d : pixel_channels;
  }
};

struct FrameSize {
  int height = 0;
  int width = 0;
};

void validate(const CodecConfig& cfg);

// [F, C, H, W] -> [F, C_latent, ceil(H/d), ceil(W/d)]. Inputs are padded to a
// multiple of d by edge replication first.
Tensor encode(const Tensor& video, const CodecConfig& cfg);

// Inverse of encode (exact for lossless_rearrange, bilinear upsampling of the
// pooled latent for lossy_pool), cropped to `original` when given.
Tensor decode(const Tensor& latent, const CodecConfig& cfg, int pixel_channels, FrameSize original = {});

// Integer-factor bilinear upsampling with half-pixel centers and edge clamp.
Tensor upsample_bilinear(const Tensor& video, int factor);
// Mean over factor x factor blocks; H and W must be divisible by factor.
Tensor downsample_area(const Tensor& video, int factor);
// Edge-replicating pad of H and W up to multiples of `multiple`.
Tensor pad_to_multiple(const Tensor& video, int multiple);

// upsample by cfg.u, encode, decode, area-downsample back.
Tensor codec_roundtrip(const Tensor& video, const CodecConfig& cfg);

// PSNR (max value 1) between `image` ([C,H,W] or [F,C,H,W]) and its codec
// roundtrip at upsample factor u. Capped at 99 dB.
double upsampled_roundtrip_psnr(const Tensor& image, const CodecConfig& cfg, int u);

}  // namespace evdi
