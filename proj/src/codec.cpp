#include "evdi/codec.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "evdi/errors.hpp"
#include "evdi/metrics.hpp"

namespace evdi {

namespace {

void require_video(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ArgumentError(std::string(what) + ": expected [F,C,H,W], got " + t.shape_string());
  if (t.empty()) throw ArgumentError(std::string(what) + ": empty video");
}

struct Tap {
  int i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(int src, int factor) {
  std::vector<Tap> taps(static_cast<std::size_t>(src) * factor);
  for (int o = 0; o < src * factor; ++o) {
    double s = (o + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

void validate(const CodecConfig& cfg) {
  if (cfg.d < 1) throw ConfigError("codec.d must be >= 1");
  if (cfg.u < 1) throw ConfigError("codec.u must be >= 1");
}

Tensor pad_to_multiple(const Tensor& video, int multiple) {
  require_video(video, "pad_to_multiple");
  const int f = video.dim(0), c = video.dim(1), h = video.dim(2), w = video.dim(3);
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return video;
  Tensor out({f, c, ph, pw});
  for (int fi = 0; fi < f; ++fi)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) out.at(fi, ci, y, x) = video.at(fi, ci, std::min(y, h - 1), std::min(x, w - 1));
  return out;
}

Tensor encode(const Tensor& video, const CodecConfig& cfg) {
  validate(cfg);
  require_video(video, "encode");
  const int d = cfg.d;
  const Tensor x = pad_to_multiple(video, d);
  const int f = x.dim(0), c = x.dim(1), h = x.dim(2) / d, w = x.dim(3) / d;
  if (cfg.kind == CodecKind::lossless_rearrange) {
    Tensor z({f, c * d * d, h, w});
    for (int fi = 0; fi < f; ++fi)
      for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < d; ++dy)
          for (int dx = 0; dx < d; ++dx)
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) z.at(fi, (ci * d + dy) * d + dx, y, xx) = x.at(fi, ci, y * d + dy, xx * d + dx);
    return z;
  }
  return downsample_area(x, d);
}

Tensor decode(const Tensor& latent, const CodecConfig& cfg, int pixel_channels, FrameSize original) {
  validate(cfg);
  require_video(latent, "decode");
  const int d = cfg.d;
  if (latent.dim(1) != cfg.latent_channels(pixel_channels)) {
    throw ArgumentError("decode: latent has " + std::to_string(latent.dim(1)) + " channels, codec expects " +
                        std::to_string(cfg.latent_channels(pixel_channels)));
  }
  const int f = latent.dim(0), h = latent.dim(2), w = latent.dim(3);
  if (original.height == 0) original = {h * d, w * d};
  if (original.height > h * d || original.width > w * d || original.height <= (h - 1) * d ||
      original.width <= (w - 1) * d) {
    throw ArgumentError("decode: original size inconsistent with latent " + latent.shape_string());
  }
  Tensor full;
  if (cfg.kind == CodecKind::lossless_rearrange) {
    full = Tensor({f, pixel_channels, h * d, w * d});
    for (int fi = 0; fi < f; ++fi)
      for (int ci = 0; ci < pixel_channels; ++ci)
        for (int dy = 0; dy < d; ++dy)
          for (int dx = 0; dx < d; ++dx)
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) full.at(fi, ci, y * d + dy, x * d + dx) = latent.at(fi, (ci * d + dy) * d + dx, y, x);
  } else {
    full = upsample_bilinear(latent, d);
  }
  if (original.height == h * d && original.width == w * d) return full;
  return crop(full, 0, 0, original.height, original.width);
}

Tensor upsample_bilinear(const Tensor& video, int factor) {
  require_video(video, "upsample_bilinear");
  if (factor < 1) throw ArgumentError("upsample factor must be >= 1");
  if (factor == 1) return video;
  const int f = video.dim(0), c = video.dim(1), h = video.dim(2), w = video.dim(3);
  const auto ty = bilinear_taps(h, factor), tx = bilinear_taps(w, factor);
  Tensor out({f, c, h * factor, w * factor});
  for (int fi = 0; fi < f; ++fi)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h * factor; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < w * factor; ++x) {
          const Tap& b = tx[static_cast<std::size_t>(x)];
          const double top = video.at(fi, ci, a.i0, b.i0) * (1 - b.w1) + video.at(fi, ci, a.i0, b.i1) * b.w1;
          const double bot = video.at(fi, ci, a.i1, b.i0) * (1 - b.w1) + video.at(fi, ci, a.i1, b.i1) * b.w1;
          out.at(fi, ci, y, x) = top * (1 - a.w1) + bot * a.w1;
        }
      }
  return out;
}

Tensor downsample_area(const Tensor& video, int factor) {
  require_video(video, "downsample_area");
  if (factor < 1) throw ArgumentError("downsample factor must be >= 1");
  if (factor == 1) return video;
  const int f = video.dim(0), c = video.dim(1), h = video.dim(2), w = video.dim(3);
  if (h % factor || w % factor) throw ArgumentError("downsample_area: size not divisible by factor");
  Tensor out({f, c, h / factor, w / factor});
  const double inv = 1.0 / (factor * factor);
  for (int fi = 0; fi < f; ++fi)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h / factor; ++y)
        for (int x = 0; x < w / factor; ++x) {
          double s = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) s += video.at(fi, ci, y * factor + dy, x * factor + dx);
          out.at(fi, ci, y, x) = s * inv;
        }
  return out;
}

Tensor codec_roundtrip(const Tensor& video, const CodecConfig& cfg) {
  validate(cfg);
  const Tensor up = upsample_bilinear(video, cfg.u);
  const Tensor rec = decode(encode(up, cfg), cfg, video.dim(1), {up.dim(2), up.dim(3)});
  return downsample_area(rec, cfg.u);
}

double upsampled_roundtrip_psnr(const Tensor& image, const CodecConfig& cfg, int u) {
  if (u < 1) throw ArgumentError("upsampled_roundtrip_psnr: u must be >= 1");
  const Tensor video = image.rank() == 3 ? stack_frames({image}) : image;
  CodecConfig c = cfg;
  c.u = u;
  return psnr(codec_roundtrip(video, c), video, 1.0);
}

}  // namespace evdi
