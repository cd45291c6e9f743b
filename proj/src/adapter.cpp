#include "evdi/adapter.hpp"

#include <cmath>
#include <numbers>

#include "evdi/errors.hpp"

namespace evdi {

using nn::Conv;
using nn::ConvShape;
using nn::GradSet;
using nn::Init;

namespace {

Conv conv3x3(nn::ParamSet& p, const std::string& name, int in, int out, std::mt19937_64& rng, int stride = 1,
             Init init = Init::lecun_normal) {
  return Conv(p, name, ConvShape{in, out, 1, 3, 3, stride}, init, rng);
}

int log2_exact(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return (1 << n) == v ? n : -1;
}

void copy_values(nn::Param& dst, const nn::Param& src) {
  if (dst.value.shape() != src.value.shape()) throw ConfigError("parameter copy shape mismatch: " + dst.name);
  dst.value = src.value;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

nlohmann::json ModelConfig::to_json() const {
  return {{"frames", frames},
          {"latent_channels", latent_channels},
          {"hidden", hidden},
          {"blocks", blocks},
          {"copied_blocks", copied_blocks},
          {"time_features", time_features},
          {"event_in_channels", event_in_channels},
          {"event_channels", event_channels},
          {"event_hidden", event_hidden},
          {"event_stride", event_stride},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("model.") + key + ": wrong type");
    }
  };
  get("frames", c.frames);
  get("latent_channels", c.latent_channels);
  get("hidden", c.hidden);
  get("blocks", c.blocks);
  get("copied_blocks", c.copied_blocks);
  get("time_features", c.time_features);
  get("event_in_channels", c.event_in_channels);
  get("event_channels", c.event_channels);
  get("event_hidden", c.event_hidden);
  get("event_stride", c.event_stride);
  get("seed", c.seed);
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(frames, "frames");
  positive(latent_channels, "latent_channels");
  positive(hidden, "hidden");
  positive(blocks, "blocks");
  positive(copied_blocks, "copied_blocks");
  positive(event_in_channels, "event_in_channels");
  positive(event_channels, "event_channels");
  positive(event_hidden, "event_hidden");
  if (time_features < 2 || time_features % 2 != 0) throw ConfigError("model.time_features must be even and >= 2");
  if (copied_blocks > blocks) throw ConfigError("model.copied_blocks exceeds model.blocks");
  if (event_stride < 1 || log2_exact(event_stride) < 0) throw ConfigError("model.event_stride must be a power of two");
}

// ---------------------------------------------------------------------------
// ResBlock

ResBlock::ResBlock(nn::ParamSet& params, const std::string& name, int channels, int features,
                   std::mt19937_64& rng)
    : spatial(conv3x3(params, name + ".spatial", channels, channels, rng)),
      embed(params, name + ".embed", features, channels, rng),
      temporal(params, name + ".temporal", ConvShape{channels, channels, 3, 1, 1, 1}, Init::lecun_normal, rng) {}

Tensor ResBlock::forward(const Tensor& h, int k, Cache* cache) const {
  Tensor s = spatial.forward(nn::silu(h), cache ? &cache->spatial : nullptr);
  nn::add_channel_bias(s, embed.forward(k));
  Tensor out = temporal.forward(nn::silu(s), cache ? &cache->temporal : nullptr);
  out += h;
  if (cache) {
    cache->h = h;
    cache->s = std::move(s);
  }
  return out;
}

Tensor ResBlock::backward(const Cache& cache, int k, const Tensor& grad_out, GradSet* grads) const {
  const Tensor db = temporal.backward(cache.temporal, grad_out, grads, true);
  const Tensor ds = nn::silu_backward(cache.s, db);
  embed.backward(k, nn::channel_sums(ds), grads);
  const Tensor da = spatial.backward(cache.spatial, ds, grads, true);
  Tensor dh = nn::silu_backward(cache.h, da);
  dh += grad_out;
  return dh;
}

// ---------------------------------------------------------------------------
// BaseDenoiser

BaseDenoiser::BaseDenoiser(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg.seed);
  stem_ = conv3x3(params_, "base.stem", 2 * cfg.latent_channels, cfg.hidden, rng);
  for (int j = 0; j < cfg.blocks; ++j) {
    blocks_.emplace_back(params_, "base.block" + std::to_string(j), cfg.hidden, cfg.time_features, rng);
  }
  head_ = conv3x3(params_, "base.head", cfg.hidden, cfg.latent_channels, rng);
}

void BaseDenoiser::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (nn::Param* p : params_.all()) p->trainable = !frozen;
}

Tensor BaseDenoiser::forward(const Tensor& z, int k, const Tensor& i_cond, const std::vector<Tensor>* residuals,
                             Cache* cache) const {
  require_same_shape(z, i_cond, "base denoiser: Z_k vs I_cond");
  if (z.dim(1) != cfg_.latent_channels) {
    throw ArgumentError("base denoiser: expected " + std::to_string(cfg_.latent_channels) +
                        " latent channels, got " + z.shape_string());
  }
  if (residuals && static_cast<int>(residuals->size()) > cfg_.blocks) {
    throw ConfigError("base denoiser: more residuals than blocks");
  }
  if (cache) cache->blocks.resize(blocks_.size());
  Tensor h = stem_.forward(concat_channels({&z, &i_cond}), cache ? &cache->stem : nullptr);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    h = blocks_[j].forward(h, k, cache ? &cache->blocks[j] : nullptr);
    if (residuals && j < residuals->size()) h += (*residuals)[j];
  }
  Tensor out = head_.forward(nn::silu(h), cache ? &cache->head : nullptr);
  if (cache) cache->top = std::move(h);
  return out;
}

std::vector<Tensor> BaseDenoiser::backward(const Cache& cache, int k, const Tensor& grad_out, GradSet* grads,
                                           int depth) const {
  GradSet* g = frozen_ ? nullptr : grads;
  const bool full = g != nullptr;
  std::vector<Tensor> out(static_cast<std::size_t>(depth));
  Tensor dh = nn::silu_backward(cache.top, head_.backward(cache.head, grad_out, g, true));
  for (int j = cfg_.blocks - 1; j >= 0; --j) {
    if (j < depth) out[static_cast<std::size_t>(j)] = dh;
    // Frozen: stop once no shallower block output gradient is needed.
    if (!full && (j == 0 || depth == 0)) return out;
    dh = blocks_[static_cast<std::size_t>(j)].backward(cache.blocks[static_cast<std::size_t>(j)], k, dh, g);
  }
  if (full) stem_.backward(cache.stem, dh, g, false);
  return out;
}

Tensor BaseDenoiser::predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor&) const {
  return forward(z, k, i_cond, nullptr, nullptr);
}

// ---------------------------------------------------------------------------
// ControlBranch

ControlBranch::ControlBranch(const ModelConfig& cfg, const BaseDenoiser& base) : cfg_(cfg) {
  cfg_.validate();
  const ModelConfig& bc = base.config();
  if (bc.hidden != cfg.hidden || bc.latent_channels != cfg.latent_channels || bc.time_features != cfg.time_features) {
    throw ConfigError("control branch: width mismatch with base");
  }
  if (cfg.copied_blocks > bc.blocks || cfg.copied_blocks > static_cast<int>(base.blocks().size())) {
    throw ConfigError("control branch: copied block count " + std::to_string(cfg.copied_blocks) +
                      " exceeds base block count " + std::to_string(bc.blocks));
  }
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const int zi = 2 * cfg.latent_channels;
  stem_ = conv3x3(params_, "branch.stem", zi + cfg.event_channels, cfg.hidden, rng);
  // Z ⊕ I columns start from the base stem; event columns keep a small random init.
  {
    const Tensor& src = base.stem().weight().value;
    Tensor& dst = stem_.weight().value;
    const int taps = 9;
    const int src_cols = zi * taps;
    const int dst_cols = (zi + cfg.event_channels) * taps;
    for (int o = 0; o < cfg.hidden; ++o) {
      for (int c = 0; c < src_cols; ++c) {
        dst[static_cast<std::size_t>(o * dst_cols + c)] = src[static_cast<std::size_t>(o * src_cols + c)];
      }
      for (int c = src_cols; c < dst_cols; ++c) dst[static_cast<std::size_t>(o * dst_cols + c)] *= 0.1;
    }
    copy_values(stem_.bias(), base.stem().bias());
  }
  for (int j = 0; j < cfg.copied_blocks; ++j) {
    const std::string name = "branch.block" + std::to_string(j);
    blocks_.emplace_back(params_, name, cfg.hidden, cfg.time_features, rng);
    const ResBlock& src = base.blocks()[static_cast<std::size_t>(j)];
    ResBlock& dst = blocks_.back();
    copy_values(dst.spatial.weight(), src.spatial.weight());
    copy_values(dst.spatial.bias(), src.spatial.bias());
    copy_values(dst.embed.weight(), src.embed.weight());
    copy_values(dst.embed.bias(), src.embed.bias());
    copy_values(dst.temporal.weight(), src.temporal.weight());
    copy_values(dst.temporal.bias(), src.temporal.bias());
  }
  for (int j = 0; j < cfg.copied_blocks; ++j) {
    proj_.emplace_back(params_, "branch.proj" + std::to_string(j), ConvShape{cfg.hidden, cfg.hidden, 1, 1, 1, 1},
                       Init::zero, rng);
  }

  const int halvings = log2_exact(cfg.event_stride);
  if (halvings == 0) {
    encoder_.push_back(conv3x3(params_, "encoder.conv0", cfg.event_in_channels, cfg.event_channels, rng));
  } else {
    int in = cfg.event_in_channels;
    for (int i = 0; i < halvings; ++i) {
      const int out = (i == halvings - 1) ? cfg.event_channels : cfg.event_hidden;
      encoder_.push_back(conv3x3(params_, "encoder.conv" + std::to_string(i), in, out, rng, 2));
      in = out;
    }
  }
}

Tensor ControlBranch::encode_events(const Tensor& stacks, EncoderCache* cache) const {
  if (stacks.rank() != 4 || stacks.dim(1) != cfg_.event_in_channels) {
    throw ConfigError("event encoder: expected " + std::to_string(cfg_.event_in_channels) + " stack channels, got " +
                      stacks.shape_string());
  }
  if (stacks.dim(2) % cfg_.event_stride != 0 || stacks.dim(3) % cfg_.event_stride != 0) {
    throw ConfigError("event encoder: stack size " + stacks.shape_string() + " not divisible by stride " +
                      std::to_string(cfg_.event_stride));
  }
  if (cache) {
    cache->convs.assign(encoder_.size(), {});
    cache->pre.assign(encoder_.size(), {});
  }
  Tensor x = stacks;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    x = encoder_[i].forward(x, cache ? &cache->convs[i] : nullptr);
    if (i + 1 < encoder_.size()) {
      if (cache) cache->pre[i] = x;
      x = nn::silu(x);
    }
  }
  return x;
}

Tensor ControlBranch::encode_events_backward(const EncoderCache& cache, const Tensor& grad_out, GradSet* grads) const {
  Tensor g = grad_out;
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    if (i + 1 < encoder_.size()) g = nn::silu_backward(cache.pre[i], g);
    g = encoder_[i].backward(cache.convs[i], g, grads, true);
  }
  return g;
}

std::vector<Tensor> ControlBranch::forward(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond,
                                           Cache* cache) const {
  if (e_cond.rank() != 4 || e_cond.dim(0) != z.dim(0) || e_cond.dim(2) != z.dim(2) || e_cond.dim(3) != z.dim(3) ||
      e_cond.dim(1) != cfg_.event_channels) {
    throw ArgumentError("control branch: E_cond " + e_cond.shape_string() + " does not match latent " +
                        z.shape_string());
  }
  if (cache) {
    cache->blocks.resize(blocks_.size());
    cache->proj.resize(proj_.size());
  }
  Tensor g = stem_.forward(concat_channels({&z, &i_cond, &e_cond}), cache ? &cache->stem : nullptr);
  std::vector<Tensor> residuals;
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    g = blocks_[j].forward(g, k, cache ? &cache->blocks[j] : nullptr);
    residuals.push_back(proj_[j].forward(g, cache ? &cache->proj[j] : nullptr));
  }
  return residuals;
}

Tensor ControlBranch::backward(const Cache& cache, int k, const std::vector<Tensor>& grad_residuals,
                               GradSet* grads) const {
  if (grad_residuals.size() != blocks_.size()) throw ConfigError("control branch: residual gradient count mismatch");
  Tensor dg;
  for (std::size_t j = blocks_.size(); j-- > 0;) {
    Tensor d = proj_[j].backward(cache.proj[j], grad_residuals[j], grads, true);
    if (!dg.empty()) d += dg;
    dg = blocks_[j].backward(cache.blocks[j], k, d, grads);
  }
  const Tensor dx = stem_.backward(cache.stem, dg, grads, true);
  const int skip = 2 * cfg_.latent_channels;
  const int frames = dx.dim(0), h = dx.dim(2), w = dx.dim(3);
  Tensor de({frames, cfg_.event_channels, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < cfg_.event_channels; ++c) {
      const double* src = &dx.at(f, skip + c, 0, 0);
      double* dst = &de.at(f, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i];
    }
  }
  return de;
}

void ControlBranch::scale_injections(double s) {
  for (Conv& p : proj_) {
    p.weight().value *= s;
    p.bias().value *= s;
  }
}

// ---------------------------------------------------------------------------
// AdaptedModel

AdaptedModel::AdaptedModel(BaseDenoiser base, ControlBranch branch) : base_(std::move(base)), branch_(std::move(branch)) {
  const ModelConfig& b = base_.config();
  const ModelConfig& c = branch_.config();
  if (c.copied_blocks > b.blocks) {
    throw ConfigError("adapted model: branch has " + std::to_string(c.copied_blocks) + " blocks, base has " +
                      std::to_string(b.blocks));
  }
  if (c.hidden != b.hidden || c.latent_channels != b.latent_channels) {
    throw ConfigError("adapted model: branch and base widths differ");
  }
}

AdaptedModel::AdaptedModel(BaseDenoiser base)
    : base_(std::move(base)), branch_(base_.config(), base_) {}

Tensor AdaptedModel::predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond) const {
  const std::vector<Tensor> residuals = branch_.forward(z, k, i_cond, e_cond, nullptr);
  return base_.forward(z, k, i_cond, &residuals, nullptr);
}

// ---------------------------------------------------------------------------
// Training

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},       {"steps", steps}, {"batch", batch},
          {"accumulation", accumulation},    {"seed", seed},   {"grad_clip", grad_clip},
          {"crop", crop},   {"cosine_decay", cosine_decay},    {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("train.") + key + ": wrong type");
    }
  };
  get("lr", c.lr);
  get("steps", c.steps);
  get("batch", c.batch);
  get("accumulation", c.accumulation);
  get("seed", c.seed);
  get("grad_clip", c.grad_clip);
  get("crop", c.crop);
  get("cosine_decay", c.cosine_decay);
  get("log_every", c.log_every);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (accumulation < 1) throw ConfigError("train.accumulation must be >= 1");
  if (crop < 0) throw ConfigError("train.crop must be >= 0");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
}

TrainState::TrainState(const nn::ParamSet& params, const TrainConfig& cfg)
    : adam(params, nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip}), rng(cfg.seed) {}

double sample_gradients(const BaseDenoiser& base, const ControlBranch* branch, const TrainingClip& clip, int k,
                        const Tensor& eps, const NoiseSchedule& schedule, GradSet* base_grads, GradSet* branch_grads,
                        double weight) {
  const Tensor zk = forward_diffuse(clip.x0, k, eps, schedule);
  BaseDenoiser::Cache bcache;
  ControlBranch::Cache ccache;
  ControlBranch::EncoderCache ecache;
  std::vector<Tensor> residuals;
  if (branch) {
    const Tensor e_cond = branch->encode_events(clip.events, &ecache);
    residuals = branch->forward(zk, k, clip.i_cond, e_cond, &ccache);
  }
  const Tensor pred = base.forward(zk, k, clip.i_cond, branch ? &residuals : nullptr, &bcache);
  const double n = static_cast<double>(pred.size());
  Tensor grad(pred.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - eps[i];
    loss += diff * diff;
    grad[i] = weight * 2.0 * diff / n;
  }
  loss /= n;
  const int depth = branch ? branch->config().copied_blocks : 0;
  const std::vector<Tensor> dres = base.backward(bcache, k, grad, base_grads, depth);
  if (branch) {
    const Tensor de = branch->backward(ccache, k, dres, branch_grads);
    branch->encode_events_backward(ecache, de, branch_grads);
  }
  return loss;
}

namespace {

TrainingClip crop_clip(const TrainingClip& clip, int size, int stride, std::mt19937_64& rng) {
  const int h = clip.x0.dim(2), w = clip.x0.dim(3);
  if (size <= 0 || (size >= h && size >= w)) return clip;
  if (size > h || size > w) throw ConfigError("train.crop exceeds latent canvas");
  std::uniform_int_distribution<int> ys(0, h - size), xs(0, w - size);
  const int y = ys(rng), x = xs(rng);
  TrainingClip out;
  out.x0 = crop(clip.x0, y, x, size, size);
  out.i_cond = crop(clip.i_cond, y, x, size, size);
  if (!clip.events.empty()) out.events = crop(clip.events, y * stride, x * stride, size * stride, size * stride);
  return out;
}

double lr_scale(const TrainConfig& cfg, int step) {
  if (!cfg.cosine_decay || cfg.steps <= 1) return 1.0;
  const double t = static_cast<double>(step) / (cfg.steps - 1);
  return 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void run_training(const BaseDenoiser& base, const ControlBranch* branch, nn::ParamSet& trained,
                  const std::vector<TrainingClip>& data, const TrainConfig& cfg, const NoiseSchedule& schedule,
                  TrainState& state, const ProgressFn& progress) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("training requires at least one clip");
  if (state.adam.first_moments().size() != trained.size()) state = TrainState(trained, cfg);
  const int stride = branch ? branch->config().event_stride : 1;
  const int per_step = cfg.batch * cfg.accumulation;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> pick_k(1, schedule.steps);
  while (state.step < cfg.steps) {
    GradSet grads = nn::zero_grads(trained);
    double loss = 0.0;
    for (int s = 0; s < per_step; ++s) {
      const TrainingClip& full = data[pick(state.rng)];
      const TrainingClip sample = crop_clip(full, cfg.crop, stride, state.rng);
      const int k = pick_k(state.rng);
      const Tensor eps = standard_normal(sample.x0.shape(), state.rng);
      if (branch) {
        loss += sample_gradients(base, branch, sample, k, eps, schedule, nullptr, &grads, 1.0 / per_step);
      } else {
        loss += sample_gradients(base, nullptr, sample, k, eps, schedule, &grads, nullptr, 1.0 / per_step);
      }
    }
    loss /= per_step;
    if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", state.step);
    state.adam.step(trained, grads, lr_scale(cfg, state.step));
    state.losses.push_back(loss);
    ++state.step;
    if (progress && (state.step % cfg.log_every == 0 || state.step == cfg.steps)) progress(state.step, loss);
  }
}

}  // namespace

void pretrain_base(BaseDenoiser& base, const std::vector<TrainingClip>& data, const TrainConfig& cfg,
                   const NoiseSchedule& schedule, TrainState& state, const ProgressFn& progress) {
  if (base.frozen()) throw ArgumentError("pretrain_base: base is frozen");
  run_training(base, nullptr, base.params(), data, cfg, schedule, state, progress);
}

void train_adapter(AdaptedModel& model, const std::vector<TrainingClip>& data, const TrainConfig& cfg,
                   const NoiseSchedule& schedule, TrainState& state, const ProgressFn& progress) {
  for (const TrainingClip& c : data) {
    if (c.events.empty()) throw ArgumentError("train_adapter: clip without event stacks");
  }
  model.base().set_frozen(true);
  const std::uint64_t before = model.base().hash();
  run_training(model.base(), &model.branch(), model.branch().params(), data, cfg, schedule, state, progress);
  const std::uint64_t after = model.base().hash();
  if (before != after) {
    throw InvariantViolation("base parameters changed during adapter training: " + hex64(before) + " -> " +
                             hex64(after));
  }
}

double validation_loss(const BaseDenoiser& base, const ControlBranch* branch, const std::vector<TrainingClip>& data,
                       const NoiseSchedule& schedule, std::uint64_t seed, int draws, bool zero_events) {
  if (data.empty() || draws < 1) throw ArgumentError("validation_loss: nothing to evaluate");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_k(1, schedule.steps);
  double total = 0.0;
  int count = 0;
  for (const TrainingClip& clip : data) {
    Tensor e_cond;
    if (branch) {
      const Tensor stacks = zero_events ? Tensor(clip.events.shape()) : clip.events;
      e_cond = branch->encode_events(stacks, nullptr);
    }
    for (int d = 0; d < draws; ++d) {
      const int k = pick_k(rng);
      const Tensor eps = standard_normal(clip.x0.shape(), rng);
      const Tensor zk = forward_diffuse(clip.x0, k, eps, schedule);
      Tensor pred;
      if (branch) {
        const auto residuals = branch->forward(zk, k, clip.i_cond, e_cond, nullptr);
        pred = base.forward(zk, k, clip.i_cond, &residuals, nullptr);
      } else {
        pred = base.forward(zk, k, clip.i_cond, nullptr, nullptr);
      }
      double l = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) l += (pred[i] - eps[i]) * (pred[i] - eps[i]);
      total += l / static_cast<double>(pred.size());
      ++count;
    }
  }
  return total / count;
}

std::vector<double> smooth_curve(const std::vector<double>& losses, double factor) {
  std::vector<double> out;
  double ema = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    ema = i == 0 ? losses[i] : factor * ema + (1.0 - factor) * losses[i];
    out.push_back(ema);
  }
  return out;
}

}  // namespace evdi
