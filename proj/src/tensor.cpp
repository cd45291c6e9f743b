#include "evdi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "evdi/errors.hpp"

namespace evdi {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ArgumentError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != element_count(shape_)) {
    throw ArgumentError("tensor value count does not match shape " + shape_string());
  }
}

std::size_t Tensor::frame_stride() const {
  if (shape_.empty()) return 0;
  return data_.size() / static_cast<std::size_t>(std::max(shape_[0], 1));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ArgumentError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                        b.shape_string());
  }
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor concat_channels(std::initializer_list<const Tensor*> parts) {
  if (parts.size() == 0) throw ArgumentError("concat_channels: no inputs");
  const Tensor& first = **parts.begin();
  if (first.rank() != 4) throw ArgumentError("concat_channels: rank-4 tensors required");
  const int frames = first.dim(0), h = first.dim(2), w = first.dim(3);
  int channels = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 4 || p->dim(0) != frames || p->dim(2) != h || p->dim(3) != w) {
      throw ArgumentError("concat_channels: incompatible shapes " + first.shape_string() + " vs " +
                          p->shape_string());
    }
    channels += p->dim(1);
  }
  Tensor out({frames, channels, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int f = 0; f < frames; ++f) {
    double* dst = out.frame(f);
    for (const Tensor* p : parts) {
      const std::size_t n = plane * p->dim(1);
      std::memcpy(dst, p->frame(f), n * sizeof(double));
      dst += n;
    }
  }
  return out;
}

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
  if (t.rank() != 4) throw ArgumentError("crop: rank-4 tensor required");
  if (y0 < 0 || x0 < 0 || y0 + h > t.dim(2) || x0 + w > t.dim(3)) {
    throw ArgumentError("crop: window outside tensor " + t.shape_string());
  }
  Tensor out({t.dim(0), t.dim(1), h, w});
  for (int f = 0; f < t.dim(0); ++f)
    for (int c = 0; c < t.dim(1); ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(&out.at(f, c, y, 0), &t.at(f, c, y0 + y, x0), sizeof(double) * w);
  return out;
}

Tensor take_frame(const Tensor& video, int f) {
  Tensor out({1, video.dim(1), video.dim(2), video.dim(3)});
  std::memcpy(out.data(), video.frame(f), video.frame_stride() * sizeof(double));
  return out;
}

Tensor frame_image(const Tensor& video, int f) {
  Tensor out({video.dim(1), video.dim(2), video.dim(3)});
  std::memcpy(out.data(), video.frame(f), video.frame_stride() * sizeof(double));
  return out;
}

Tensor stack_frames(const std::vector<Tensor>& images) {
  if (images.empty()) throw ArgumentError("stack_frames: no frames");
  const auto& s = images.front().shape();
  if (s.size() != 3) throw ArgumentError("stack_frames: rank-3 images required");
  Tensor out({static_cast<int>(images.size()), s[0], s[1], s[2]});
  for (std::size_t f = 0; f < images.size(); ++f) {
    if (images[f].shape() != s) throw ArgumentError("stack_frames: frame shapes differ");
    std::memcpy(out.frame(static_cast<int>(f)), images[f].data(), images[f].size() * sizeof(double));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t content_hash(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace evdi
