#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace evdi {

// Dense row-major float64 tensor. Videos and latents use the [F, C, H, W]
// layout; images are [C, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  // 4-D [F, C, H, W] accessors.
  double& at(int f, int c, int y, int x) { return data_[offset4(f, c, y, x)]; }
  const double& at(int f, int c, int y, int x) const { return data_[offset4(f, c, y, x)]; }
  // 3-D [C, H, W] accessors.
  double& at(int c, int y, int x) { return data_[offset3(c, y, x)]; }
  const double& at(int c, int y, int x) const { return data_[offset3(c, y, x)]; }

  // Pointer to frame f of a rank-4 tensor.
  double* frame(int f) { return data_.data() + frame_stride() * static_cast<std::size_t>(f); }
  const double* frame(int f) const {
    return data_.data() + frame_stride() * static_cast<std::size_t>(f);
  }
  std::size_t frame_stride() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  std::size_t offset4(int f, int c, int y, int x) const {
    return ((static_cast<std::size_t>(f) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }
  std::size_t offset3(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t element_count(const std::vector<int>& shape);

// Throws ArgumentError naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

// Channel-wise concatenation of rank-4 tensors sharing F, H and W.
Tensor concat_channels(std::initializer_list<const Tensor*> parts);

// Spatial crop [y0, y0+h) x [x0, x0+w) of a rank-4 tensor.
Tensor crop(const Tensor& t, int y0, int x0, int h, int w);

// Frame f of a rank-4 tensor as a [1, C, H, W] tensor.
Tensor take_frame(const Tensor& video, int f);

// Stack rank-3 [C,H,W] images into a [F,C,H,W] video.
Tensor stack_frames(const std::vector<Tensor>& images);

// Image f of a rank-4 tensor as a rank-3 [C,H,W] tensor.
Tensor frame_image(const Tensor& video, int f);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// FNV-1a over the raw little-endian bytes of the values; used for parameter
// freeze checks and checkpoint manifests.
std::uint64_t content_hash(std::span<const double> values);
std::string hex64(std::uint64_t v);

}  // namespace evdi
