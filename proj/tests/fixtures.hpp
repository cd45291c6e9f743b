#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "evdi/adapter.hpp"
#include "helpers.hpp"

// Tiny adapted-model instances and finite-difference gradient checks shared by
// the unit tests and the acceptance run.
namespace evdi::testing {

inline ModelConfig tiny_config(std::uint64_t seed) {
  ModelConfig c;
  c.frames = 2;
  c.latent_channels = 2;
  c.hidden = 4;
  c.blocks = 3;
  c.copied_blocks = 2;
  c.time_features = 4;
  c.event_in_channels = 2;
  c.event_channels = 3;
  c.event_hidden = 3;
  c.event_stride = 2;
  c.seed = seed;
  return c;
}

inline TrainingClip tiny_clip(std::mt19937_64& rng) {
  TrainingClip c;
  c.x0 = random_tensor({2, 2, 8, 8}, rng);
  c.i_cond = random_tensor({2, 2, 8, 8}, rng);
  c.events = random_tensor({2, 2, 16, 16}, rng, 0.0, 1.0);
  return c;
}

inline void randomize(nn::Param& p, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.value.values()) v = u(rng);
}

inline double mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

struct GradCheck {
  double worst = 0;  // max relative error over every checked parameter
  std::size_t checked = 0;
};

// Central differences (h = 1e-4) against the analytic loss gradient of the
// full adapted model, over every base and branch parameter.
inline GradCheck adapted_model_gradcheck(int instance) {
  const NoiseSchedule sched = make_schedule(20, 1e-3, 0.2);
  std::mt19937_64 rng(100 + instance);
  AdaptedModel model(BaseDenoiser(tiny_config(20 + instance)));
  // Non-zero injections and biases so every path carries gradient.
  for (nn::Param* p : model.branch().params().all()) {
    if (p->name.find("proj") != std::string::npos || p->name.find("bias") != std::string::npos) randomize(*p, rng, 0.3);
  }
  for (nn::Param* p : model.base().params().all()) {
    if (p->name.find("bias") != std::string::npos) randomize(*p, rng, 0.3);
  }
  const TrainingClip clip = tiny_clip(rng);
  const int k = 1 + instance * 7;
  const Tensor eps = random_tensor(clip.x0.shape(), rng);
  nn::GradSet gb = nn::zero_grads(model.base().params());
  nn::GradSet gc = nn::zero_grads(model.branch().params());
  sample_gradients(model.base(), &model.branch(), clip, k, eps, sched, &gb, &gc, 1.0);

  const Tensor zk = forward_diffuse(clip.x0, k, eps, sched);
  auto loss = [&] { return mse(model.predict_noise(zk, k, clip.i_cond, model.encode_events(clip.events)), eps); };
  GradCheck r;
  auto check_set = [&](nn::ParamSet& ps, const nn::GradSet& g) {
    for (nn::Param* p : ps.all()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double keep = p->value[i], h = 1e-4;
        p->value[i] = keep + h;
        const double up = loss();
        p->value[i] = keep - h;
        const double down = loss();
        p->value[i] = keep;
        r.worst = std::max(r.worst, relative_error(g[static_cast<std::size_t>(p->id)][i], (up - down) / (2 * h)));
        ++r.checked;
      }
    }
  };
  check_set(model.base().params(), gb);
  check_set(model.branch().params(), gc);
  return r;
}

// Same check for the strided event encoder alone, through a random linear probe.
inline GradCheck event_encoder_gradcheck(int instance) {
  std::mt19937_64 rng(200 + instance);
  ModelConfig c = tiny_config(30 + instance);
  c.event_stride = 4;
  AdaptedModel model((BaseDenoiser(c)));
  for (nn::Param* p : model.branch().params().all()) {
    if (p->name.rfind("encoder.", 0) == 0) randomize(*p, rng, 0.5);
  }
  const Tensor stacks = random_tensor({2, 2, 16, 16}, rng, 0, 1);
  ControlBranch::EncoderCache cache;
  const Tensor e = model.branch().encode_events(stacks, &cache);
  const Tensor probe = random_tensor(e.shape(), rng);
  nn::GradSet g = nn::zero_grads(model.branch().params());
  model.branch().encode_events_backward(cache, probe, &g);
  auto loss = [&] {
    const Tensor out = model.encode_events(stacks);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
    return s;
  };
  GradCheck r;
  for (nn::Param* p : model.branch().params().all()) {
    if (p->name.rfind("encoder.", 0) != 0) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i], h = 1e-4;
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double down = loss();
      p->value[i] = keep;
      r.worst = std::max(r.worst, relative_error(g[static_cast<std::size_t>(p->id)][i], (up - down) / (2 * h)));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace evdi::testing
