#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "evdi/diffusion.hpp"
#include "evdi/nn.hpp"
#include "evdi/tensor.hpp"
#include "json.hpp"

namespace evdi {

struct ModelConfig {
  int frames = 9;
  int latent_channels = 16;
  int hidden = 32;
  int blocks = 3;
  int copied_blocks = 2;  // encoder-side blocks mirrored by the control branch
  int time_features = 16;
  int event_in_channels = 6;  // 2 * stacks
  int event_channels = 16;    // channels of E_cond
  int event_hidden = 16;
  int event_stride = 4;       // cumulative encoder stride; must equal the codec factor
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Pre-activation residual block: h + T(silu(S(silu(h)) + e(k))), S a per-frame
// 3x3 conv, T a kernel-3 conv across frames, e a projected step embedding.
struct ResBlock {
  nn::Conv spatial;
  nn::StepEmbedding embed;
  nn::Conv temporal;

  struct Cache {
    Tensor h;
    nn::ConvCache spatial;
    Tensor s;
    nn::ConvCache temporal;
  };

  ResBlock() = default;
  ResBlock(nn::ParamSet& params, const std::string& name, int channels, int features, std::mt19937_64& rng);
  Tensor forward(const Tensor& h, int k, Cache* cache) const;
  Tensor backward(const Cache& cache, int k, const Tensor& grad_out, nn::GradSet* grads) const;
};

// Stand-in for the pre-trained video denoiser. Consumes Z_k ⊕ I_cond.
class BaseDenoiser final : public Denoiser {
 public:
  struct Cache {
    nn::ConvCache stem;
    std::vector<ResBlock::Cache> blocks;
    Tensor top;  // input of the head activation
    nn::ConvCache head;
  };

  explicit BaseDenoiser(const ModelConfig& cfg);

  // `residuals[j]` (when given) is added to the output of block j.
  Tensor forward(const Tensor& z, int k, const Tensor& i_cond, const std::vector<Tensor>* residuals,
                 Cache* cache) const;
  // Accumulates parameter gradients into `grads` unless frozen or null. Returns
  // the gradients w.r.t. the outputs of blocks 0..depth-1.
  std::vector<Tensor> backward(const Cache& cache, int k, const Tensor& grad_out, nn::GradSet* grads,
                               int depth) const;

  Tensor predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond) const override;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const nn::Conv& stem() const { return stem_; }
  const std::vector<ResBlock>& blocks() const { return blocks_; }
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  std::uint64_t hash() const { return nn::parameter_hash(params_); }

 private:
  ModelConfig cfg_;
  nn::ParamSet params_;
  nn::Conv stem_;
  std::vector<ResBlock> blocks_;
  nn::Conv head_;
  bool frozen_ = false;
};

// Trainable copy of the base's first blocks with zero-initialized injection
// projections, plus the strided event encoder producing E_cond.
class ControlBranch {
 public:
  struct Cache {
    nn::ConvCache stem;
    std::vector<ResBlock::Cache> blocks;
    std::vector<nn::ConvCache> proj;
  };
  struct EncoderCache {
    std::vector<nn::ConvCache> convs;
    std::vector<Tensor> pre;  // pre-activation outputs of hidden layers
  };

  ControlBranch(const ModelConfig& cfg, const BaseDenoiser& base);

  // [F, 2S, h*s, w*s] -> [F, C_e, h, w]
  Tensor encode_events(const Tensor& stacks, EncoderCache* cache) const;
  Tensor encode_events_backward(const EncoderCache& cache, const Tensor& grad_out, nn::GradSet* grads) const;

  std::vector<Tensor> forward(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond,
                              Cache* cache) const;
  // Returns dL/dE_cond.
  Tensor backward(const Cache& cache, int k, const std::vector<Tensor>& grad_residuals, nn::GradSet* grads) const;

  void scale_injections(double s);
  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  std::uint64_t hash() const { return nn::parameter_hash(params_); }

 private:
  ModelConfig cfg_;
  nn::ParamSet params_;
  nn::Conv stem_;
  std::vector<ResBlock> blocks_;
  std::vector<nn::Conv> proj_;
  std::vector<nn::Conv> encoder_;
};

class AdaptedModel final : public Denoiser {
 public:
  AdaptedModel(BaseDenoiser base, ControlBranch branch);
  // Builds a fresh branch copied from `base`.
  explicit AdaptedModel(BaseDenoiser base);

  Tensor predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond) const override;
  Tensor encode_events(const Tensor& stacks) const { return branch_.encode_events(stacks, nullptr); }

  BaseDenoiser& base() { return base_; }
  const BaseDenoiser& base() const { return base_; }
  ControlBranch& branch() { return branch_; }
  const ControlBranch& branch() const { return branch_; }

 private:
  BaseDenoiser base_;
  ControlBranch branch_;
};

// One training clip in latent space. `events` is the per-frame stack tensor
// at codec input resolution; it may be empty for base pre-training.
struct TrainingClip {
  Tensor x0;      // [F, C_latent, h, w]
  Tensor i_cond;  // [F, C_latent, h, w]
  Tensor events;  // [F, 2S, h*s, w*s]
};

struct TrainConfig {
  double lr = 1e-3;
  int steps = 500;
  int batch = 4;
  int accumulation = 1;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  int crop = 0;            // square latent crop per sample; 0 = full canvas
  bool cosine_decay = true;  // to 10% of lr at the final step
  int log_every = 10;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Resumable optimizer state.
struct TrainState {
  int step = 0;
  nn::Adam adam;
  std::mt19937_64 rng;
  std::vector<double> losses;  // one per completed step

  TrainState() = default;
  TrainState(const nn::ParamSet& params, const TrainConfig& cfg);
};

using ProgressFn = std::function<void(int step, double loss)>;

// Loss and parameter gradients of one (clip, k, eps) sample, scaled by
// `weight`. With `branch_grads` null the model runs base-only.
double sample_gradients(const BaseDenoiser& base, const ControlBranch* branch, const TrainingClip& clip, int k,
                        const Tensor& eps, const NoiseSchedule& schedule, nn::GradSet* base_grads,
                        nn::GradSet* branch_grads, double weight);

// Trains with I_cond only. Runs until state.step == cfg.steps.
void pretrain_base(BaseDenoiser& base, const std::vector<TrainingClip>& data, const TrainConfig& cfg,
                   const NoiseSchedule& schedule, TrainState& state, const ProgressFn& progress = {});

// Freezes the base and trains branch + encoder. Throws InvariantViolation if
// any base parameter changed.
void train_adapter(AdaptedModel& model, const std::vector<TrainingClip>& data, const TrainConfig& cfg,
                   const NoiseSchedule& schedule, TrainState& state, const ProgressFn& progress = {});

// Noise-prediction loss over fixed (k, eps) draws: `draws` per clip, seeded.
// With `model` null the base runs alone; `zero_events` feeds empty stacks.
double validation_loss(const BaseDenoiser& base, const ControlBranch* branch, const std::vector<TrainingClip>& data,
                       const NoiseSchedule& schedule, std::uint64_t seed, int draws, bool zero_events);

// Exponential moving average (factor 0.98) of a loss curve.
std::vector<double> smooth_curve(const std::vector<double>& losses, double factor = 0.98);

}  // namespace evdi
