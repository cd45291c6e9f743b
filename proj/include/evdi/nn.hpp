#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evdi/tensor.hpp"

// Minimal layer library with hand-written backward passes. Activations are
// [F, C, H, W] feature maps; spatial layers treat F as the batch axis and
// temporal layers convolve along it.
namespace evdi::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
  std::string name;
  Tensor value;
  int id = -1;
  bool trainable = true;
};

// Owns parameters at stable addresses; ids index into GradSet.
class ParamSet {
 public:
  Param& add(std::string name, std::vector<int> shape);
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

// Gradient buffers indexed by Param::id.
using GradSet = std::vector<Tensor>;
GradSet zero_grads(const ParamSet& params);
void add_grads(GradSet& into, const GradSet& from);

// Hash over every parameter value in registration order.
std::uint64_t parameter_hash(const ParamSet& params, bool trainable_only = false);
std::uint64_t parameter_hash(const std::vector<const Param*>& params);

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kt = 1, kh = 3, kw = 3;  // kernel extent over (frames, rows, cols)
  int stride = 1;              // spatial stride
};

enum class Init { lecun_normal, zero };

struct ConvCache {
  RowMatrix columns;  // [K, F*Ho*Wo]
  std::vector<int> in_shape;
};

// Zero-padded "same" convolution over (F, H, W) with kernel (kt, kh, kw).
class Conv {
 public:
  Conv() = default;
  Conv(ParamSet& params, const std::string& name, ConvShape shape, Init init, std::mt19937_64& rng);

  Tensor forward(const Tensor& in, ConvCache* cache) const;
  // Accumulates weight/bias gradients when the parameters are trainable and
  // `grads` is non-null; returns the input gradient when `want_input_grad`.
  Tensor backward(const ConvCache& cache, const Tensor& grad_out, GradSet* grads, bool want_input_grad) const;

  const ConvShape& shape() const { return shape_; }
  Param& weight() { return *weight_; }
  Param& bias() { return *bias_; }
  const Param& weight() const { return *weight_; }
  const Param& bias() const { return *bias_; }

 private:
  ConvShape shape_;
  Param* weight_ = nullptr;  // [out, in*kt*kh*kw]
  Param* bias_ = nullptr;    // [out]
};

Tensor silu(const Tensor& x);
// grad_out * silu'(x)
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

// Fixed sinusoidal features of the diffusion step index.
std::vector<double> step_features(int k, int count);

// Per-block affine projection of the step features, broadcast-added to every
// position of a feature map.
class StepEmbedding {
 public:
  StepEmbedding() = default;
  StepEmbedding(ParamSet& params, const std::string& name, int features, int channels, std::mt19937_64& rng);

  std::vector<double> forward(int k) const;
  void backward(int k, const std::vector<double>& grad_channels, GradSet* grads) const;
  Param& weight() { return *weight_; }
  Param& bias() { return *bias_; }
  const Param& weight() const { return *weight_; }
  const Param& bias() const { return *bias_; }

 private:
  int features_ = 0;
  int channels_ = 0;
  Param* weight_ = nullptr;  // [channels, features]
  Param* bias_ = nullptr;    // [channels]
};

void add_channel_bias(Tensor& x, const std::vector<double>& per_channel);
std::vector<double> channel_sums(const Tensor& grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
};

// Adaptive-moment optimizer over the trainable parameters of a ParamSet.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& params, AdamConfig cfg);

  // Returns the pre-clip global gradient norm.
  double step(ParamSet& params, const GradSet& grads, double lr_scale = 1.0);

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace evdi::nn
