#include "evdi/nn.hpp"

#include <cmath>
#include <cstring>

#include "evdi/errors.hpp"

namespace evdi::nn {

Param& ParamSet::add(std::string name, std::vector<int> shape) {
  for (const auto& p : params_) {
    if (p->name == name) throw ConfigError("duplicate parameter name " + name);
  }
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->value = Tensor(std::move(shape));
  p->id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

std::vector<Param*> ParamSet::all() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamSet::all() const {
  std::vector<const Param*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

GradSet zero_grads(const ParamSet& params) {
  GradSet g;
  for (const Param* p : params.all()) g.emplace_back(p->value.shape());
  return g;
}

void add_grads(GradSet& into, const GradSet& from) {
  if (into.size() != from.size()) throw ArgumentError("add_grads: size mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

std::uint64_t parameter_hash(const std::vector<const Param*>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params) {
    h ^= content_hash(p->value.values());
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t parameter_hash(const ParamSet& params, bool trainable_only) {
  std::vector<const Param*> chosen;
  for (const Param* p : params.all())
    if (!trainable_only || p->trainable) chosen.push_back(p);
  return parameter_hash(chosen);
}

// ---------------------------------------------------------------------------
// Conv

namespace {

struct Geometry {
  int frames, in_c, h, w, ho, wo, pt, ph, pw;
};

Geometry geometry(const ConvShape& s, const std::vector<int>& in_shape) {
  Geometry g;
  g.frames = in_shape[0];
  g.in_c = in_shape[1];
  g.h = in_shape[2];
  g.w = in_shape[3];
  g.pt = s.kt / 2;
  g.ph = s.kh / 2;
  g.pw = s.kw / 2;
  g.ho = (g.h + 2 * g.ph - s.kh) / s.stride + 1;
  g.wo = (g.w + 2 * g.pw - s.kw) / s.stride + 1;
  return g;
}

}  // namespace

Conv::Conv(ParamSet& params, const std::string& name, ConvShape shape, Init init, std::mt19937_64& rng)
    : shape_(shape) {
  if (shape.kt % 2 == 0 || shape.kh % 2 == 0 || shape.kw % 2 == 0) {
    throw ConfigError(name + ": kernel extents must be odd");
  }
  const int fan_in = shape.in_channels * shape.kt * shape.kh * shape.kw;
  weight_ = &params.add(name + ".weight", {shape.out_channels, fan_in});
  bias_ = &params.add(name + ".bias", {shape.out_channels});
  if (init == Init::lecun_normal) {
    std::normal_distribution<double> n(0.0, std::sqrt(1.0 / fan_in));
    for (double& v : weight_->value.values()) v = n(rng);
  }
}

Tensor Conv::forward(const Tensor& in, ConvCache* cache) const {
  if (in.rank() != 4 || in.dim(1) != shape_.in_channels) {
    throw ArgumentError("conv " + weight_->name + ": expected " + std::to_string(shape_.in_channels) +
                        " input channels, got " + in.shape_string());
  }
  const Geometry g = geometry(shape_, in.shape());
  const int kt = shape_.kt, kh = shape_.kh, kw = shape_.kw, s = shape_.stride;
  const int k_rows = g.in_c * kt * kh * kw;
  const int plane = g.ho * g.wo;
  const int m_cols = g.frames * plane;

  RowMatrix local;
  RowMatrix& col = cache ? cache->columns : local;
  col.resize(k_rows, m_cols);
  for (int ci = 0; ci < g.in_c; ++ci)
    for (int dt = 0; dt < kt; ++dt)
      for (int dy = 0; dy < kh; ++dy)
        for (int dx = 0; dx < kw; ++dx) {
          const int r = ((ci * kt + dt) * kh + dy) * kw + dx;
          double* row = col.data() + static_cast<std::ptrdiff_t>(r) * m_cols;
          for (int f = 0; f < g.frames; ++f) {
            const int fi = f + dt - g.pt;
            double* dst = row + static_cast<std::ptrdiff_t>(f) * plane;
            if (fi < 0 || fi >= g.frames) {
              std::memset(dst, 0, sizeof(double) * plane);
              continue;
            }
            for (int yo = 0; yo < g.ho; ++yo) {
              const int yi = yo * s + dy - g.ph;
              double* d = dst + yo * g.wo;
              if (yi < 0 || yi >= g.h) {
                std::memset(d, 0, sizeof(double) * g.wo);
                continue;
              }
              const double* src = &in.at(fi, ci, yi, 0);
              for (int xo = 0; xo < g.wo; ++xo) {
                const int xi = xo * s + dx - g.pw;
                d[xo] = (xi >= 0 && xi < g.w) ? src[xi] : 0.0;
              }
            }
          }
        }
  if (cache) cache->in_shape = in.shape();

  Eigen::Map<const RowMatrix> w(weight_->value.data(), shape_.out_channels, k_rows);
  RowMatrix out_mat = w * col;
  Tensor out({g.frames, shape_.out_channels, g.ho, g.wo});
  for (int f = 0; f < g.frames; ++f)
    for (int co = 0; co < shape_.out_channels; ++co) {
      const double b = bias_->value[static_cast<std::size_t>(co)];
      const double* src = out_mat.data() + static_cast<std::ptrdiff_t>(co) * m_cols + f * plane;
      double* dst = &out.at(f, co, 0, 0);
      for (int p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  return out;
}

Tensor Conv::backward(const ConvCache& cache, const Tensor& grad_out, GradSet* grads, bool want_input_grad) const {
  const Geometry g = geometry(shape_, cache.in_shape);
  const int kt = shape_.kt, kh = shape_.kh, kw = shape_.kw, s = shape_.stride;
  const int k_rows = g.in_c * kt * kh * kw;
  const int plane = g.ho * g.wo;
  const int m_cols = g.frames * plane;
  const int out_c = shape_.out_channels;
  if (grad_out.rank() != 4 || grad_out.dim(0) != g.frames || grad_out.dim(1) != out_c || grad_out.dim(2) != g.ho ||
      grad_out.dim(3) != g.wo) {
    throw ArgumentError("conv " + weight_->name + " backward: gradient shape " + grad_out.shape_string());
  }

  RowMatrix gmat(out_c, m_cols);
  for (int f = 0; f < g.frames; ++f)
    for (int co = 0; co < out_c; ++co)
      std::memcpy(gmat.data() + static_cast<std::ptrdiff_t>(co) * m_cols + f * plane, &grad_out.at(f, co, 0, 0),
                  sizeof(double) * plane);

  if (grads && weight_->trainable) {
    Tensor& gw = (*grads)[static_cast<std::size_t>(weight_->id)];
    Eigen::Map<RowMatrix> gw_map(gw.data(), out_c, k_rows);
    gw_map.noalias() += gmat * cache.columns.transpose();
    Tensor& gb = (*grads)[static_cast<std::size_t>(bias_->id)];
    for (int co = 0; co < out_c; ++co) gb[static_cast<std::size_t>(co)] += gmat.row(co).sum();
  }
  if (!want_input_grad) return {};

  Eigen::Map<const RowMatrix> w(weight_->value.data(), out_c, k_rows);
  RowMatrix dcol = w.transpose() * gmat;
  Tensor din(cache.in_shape);
  for (int ci = 0; ci < g.in_c; ++ci)
    for (int dt = 0; dt < kt; ++dt)
      for (int dy = 0; dy < kh; ++dy)
        for (int dx = 0; dx < kw; ++dx) {
          const int r = ((ci * kt + dt) * kh + dy) * kw + dx;
          const double* row = dcol.data() + static_cast<std::ptrdiff_t>(r) * m_cols;
          for (int f = 0; f < g.frames; ++f) {
            const int fi = f + dt - g.pt;
            if (fi < 0 || fi >= g.frames) continue;
            const double* src = row + static_cast<std::ptrdiff_t>(f) * plane;
            for (int yo = 0; yo < g.ho; ++yo) {
              const int yi = yo * s + dy - g.ph;
              if (yi < 0 || yi >= g.h) continue;
              double* dst = &din.at(fi, ci, yi, 0);
              const double* sr = src + yo * g.wo;
              for (int xo = 0; xo < g.wo; ++xo) {
                const int xi = xo * s + dx - g.pw;
                if (xi >= 0 && xi < g.w) dst[xi] += sr[xo];
              }
            }
          }
        }
  return din;
}

// ---------------------------------------------------------------------------
// Activations and embeddings

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0 + std::exp(-x[i]));
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sg = 1.0 / (1.0 + std::exp(-x[i]));
    g[i] = grad_out[i] * sg * (1.0 + x[i] * (1.0 - sg));
  }
  return g;
}

std::vector<double> step_features(int k, int count) {
  std::vector<double> f(static_cast<std::size_t>(count));
  const int half = count / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * i / std::max(half, 1));
    f[static_cast<std::size_t>(2 * i)] = std::sin(k * freq);
    f[static_cast<std::size_t>(2 * i + 1)] = std::cos(k * freq);
  }
  return f;
}

StepEmbedding::StepEmbedding(ParamSet& params, const std::string& name, int features, int channels,
                             std::mt19937_64& rng)
    : features_(features), channels_(channels) {
  weight_ = &params.add(name + ".weight", {channels, features});
  bias_ = &params.add(name + ".bias", {channels});
  std::normal_distribution<double> n(0.0, std::sqrt(1.0 / features));
  for (double& v : weight_->value.values()) v = n(rng);
}

std::vector<double> StepEmbedding::forward(int k) const {
  const auto phi = step_features(k, features_);
  std::vector<double> e(static_cast<std::size_t>(channels_));
  for (int c = 0; c < channels_; ++c) {
    double s = bias_->value[static_cast<std::size_t>(c)];
    for (int i = 0; i < features_; ++i) s += weight_->value[static_cast<std::size_t>(c * features_ + i)] * phi[static_cast<std::size_t>(i)];
    e[static_cast<std::size_t>(c)] = s;
  }
  return e;
}

void StepEmbedding::backward(int k, const std::vector<double>& grad_channels, GradSet* grads) const {
  if (!grads || !weight_->trainable) return;
  const auto phi = step_features(k, features_);
  Tensor& gw = (*grads)[static_cast<std::size_t>(weight_->id)];
  Tensor& gb = (*grads)[static_cast<std::size_t>(bias_->id)];
  for (int c = 0; c < channels_; ++c) {
    const double g = grad_channels[static_cast<std::size_t>(c)];
    gb[static_cast<std::size_t>(c)] += g;
    for (int i = 0; i < features_; ++i) gw[static_cast<std::size_t>(c * features_ + i)] += g * phi[static_cast<std::size_t>(i)];
  }
}

void add_channel_bias(Tensor& x, const std::vector<double>& per_channel) {
  const int frames = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (int f = 0; f < frames; ++f)
    for (int c = 0; c < channels; ++c) {
      double* p = &x.at(f, c, 0, 0);
      const double b = per_channel[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
}

std::vector<double> channel_sums(const Tensor& grad) {
  const int frames = grad.dim(0), channels = grad.dim(1);
  const std::size_t plane = static_cast<std::size_t>(grad.dim(2)) * grad.dim(3);
  std::vector<double> s(static_cast<std::size_t>(channels), 0.0);
  for (int f = 0; f < frames; ++f)
    for (int c = 0; c < channels; ++c) {
      const double* p = &grad.at(f, c, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      s[static_cast<std::size_t>(c)] += acc;
    }
  return s;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const Param* p : params.all()) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

double Adam::step(ParamSet& params, const GradSet& grads, double lr_scale) {
  auto all = params.all();
  if (all.size() != grads.size() || all.size() != m_.size()) throw ArgumentError("adam: parameter count mismatch");
  double sq = 0.0;
  for (const Param* p : all) {
    if (!p->trainable) continue;
    for (double g : grads[static_cast<std::size_t>(p->id)].values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.lr * lr_scale;
  for (Param* p : all) {
    if (!p->trainable) continue;
    const auto id = static_cast<std::size_t>(p->id);
    const Tensor& g = grads[id];
    Tensor& m = m_[id];
    Tensor& v = v_[id];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p->value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
  return norm;
}

}  // namespace evdi::nn
