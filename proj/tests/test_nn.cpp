#include <cmath>
#include <random>

#include "doctest.h"
#include "evdi/errors.hpp"
#include "evdi/nn.hpp"
#include "helpers.hpp"

using namespace evdi;
using namespace evdi::nn;
using evdi::testing::random_tensor;
using evdi::testing::relative_error;

namespace {

// Direct nested-loop convolution with zero padding.
Tensor naive_conv(const Tensor& in, const Tensor& w, const Tensor& b, const ConvShape& s) {
  const int F = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  const int Ho = (H + 2 * ph - s.kh) / s.stride + 1, Wo = (W + 2 * pw - s.kw) / s.stride + 1;
  Tensor out({F, s.out_channels, Ho, Wo});
  for (int f = 0; f < F; ++f)
    for (int o = 0; o < s.out_channels; ++o)
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
          double acc = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < C; ++c)
            for (int dt = 0; dt < s.kt; ++dt)
              for (int dy = 0; dy < s.kh; ++dy)
                for (int dx = 0; dx < s.kw; ++dx) {
                  const int fi = f + dt - pt, yi = y * s.stride + dy - ph, xi = x * s.stride + dx - pw;
                  if (fi < 0 || fi >= F || yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                  const int col = ((c * s.kt + dt) * s.kh + dy) * s.kw + dx;
                  acc += w[static_cast<std::size_t>(o * C * s.kt * s.kh * s.kw + col)] * in.at(fi, c, yi, xi);
                }
          out.at(f, o, y, x) = acc;
        }
  return out;
}

double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("conv forward matches direct convolution for spatial, temporal and strided kernels") {
    std::mt19937_64 rng(1);
    for (ConvShape s : {ConvShape{3, 4, 1, 3, 3, 1}, ConvShape{2, 3, 3, 1, 1, 1}, ConvShape{3, 2, 1, 3, 3, 2},
                        ConvShape{2, 2, 3, 3, 3, 1}, ConvShape{4, 3, 1, 1, 1, 1}}) {
      ParamSet ps;
      Conv conv(ps, "c", s, Init::lecun_normal, rng);
      for (double& v : conv.bias().value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
      const Tensor in = random_tensor({3, s.in_channels, 6, 5}, rng);
      const Tensor got = conv.forward(in, nullptr);
      const Tensor want = naive_conv(in, conv.weight().value, conv.bias().value, s);
      REQUIRE(got.shape() == want.shape());
      CHECK(max_abs_diff(got, want) < 1e-12);
    }
  }

  TEST_CASE("conv backward matches central differences") {
    std::mt19937_64 rng(2);
    for (ConvShape s : {ConvShape{2, 3, 1, 3, 3, 1}, ConvShape{2, 2, 3, 1, 1, 1}, ConvShape{2, 2, 1, 3, 3, 2}}) {
      ParamSet ps;
      Conv conv(ps, "c", s, Init::lecun_normal, rng);
      Tensor in = random_tensor({2, s.in_channels, 5, 6}, rng);
      ConvCache cache;
      const Tensor out = conv.forward(in, &cache);
      const Tensor probe = random_tensor(out.shape(), rng);
      GradSet grads = zero_grads(ps);
      const Tensor din = conv.backward(cache, probe, &grads, true);
      const double h = 1e-4;
      double worst = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double keep = in[i];
        in[i] = keep + h;
        const double up = weighted_sum(conv.forward(in, nullptr), probe);
        in[i] = keep - h;
        const double down = weighted_sum(conv.forward(in, nullptr), probe);
        in[i] = keep;
        worst = std::max(worst, relative_error(din[i], (up - down) / (2 * h)));
      }
      for (Param* p : ps.all()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          const double keep = p->value[i];
          p->value[i] = keep + h;
          const double up = weighted_sum(conv.forward(in, nullptr), probe);
          p->value[i] = keep - h;
          const double down = weighted_sum(conv.forward(in, nullptr), probe);
          p->value[i] = keep;
          worst = std::max(worst, relative_error(grads[static_cast<std::size_t>(p->id)][i], (up - down) / (2 * h)));
        }
      }
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("frozen conv accumulates no parameter gradient") {
    std::mt19937_64 rng(3);
    ParamSet ps;
    Conv conv(ps, "c", ConvShape{2, 2, 1, 3, 3, 1}, Init::lecun_normal, rng);
    for (Param* p : ps.all()) p->trainable = false;
    ConvCache cache;
    const Tensor out = conv.forward(random_tensor({1, 2, 4, 4}, rng), &cache);
    GradSet grads = zero_grads(ps);
    conv.backward(cache, random_tensor(out.shape(), rng), &grads, true);
    for (const Tensor& g : grads)
      for (double v : g.values()) CHECK(v == 0.0);
  }

  TEST_CASE("silu derivative matches central differences") {
    const Tensor x({1, 1, 1, 7}, {-4.0, -1.5, -0.2, 0.0, 0.3, 1.7, 5.0});
    const Tensor ones({1, 1, 1, 7}, 1.0);
    const Tensor g = silu_backward(x, ones);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-5, v = x[i];
      auto f = [](double t) { return t / (1 + std::exp(-t)); };
      CHECK(relative_error(g[i], (f(v + h) - f(v - h)) / (2 * h)) < 1e-8);
    }
  }

  TEST_CASE("step features are bounded sinusoids") {
    const auto f = step_features(7, 8);
    REQUIRE(f.size() == 8);
    CHECK(f[0] == doctest::Approx(std::sin(7.0)));
    CHECK(f[1] == doctest::Approx(std::cos(7.0)));
    CHECK(f[2] == doctest::Approx(std::sin(7.0 * std::exp(-std::log(1000.0) / 4))));
  }

  TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
    ParamSet ps;
    Param& p = ps.add("p", {3});
    p.value = Tensor({3}, {1.0, -2.0, 0.5});
    Adam adam(ps, AdamConfig{0.1, 0.9, 0.999, 1e-12, 0.0});
    GradSet g = zero_grads(ps);
    g[0] = Tensor({3}, {2.0, -0.5, 0.0});
    adam.step(ps, g);
    // Bias-corrected moments give m/sqrt(v) = sign(g) on the first step.
    CHECK(p.value[0] == doctest::Approx(0.9));
    CHECK(p.value[1] == doctest::Approx(-1.9));
    CHECK(p.value[2] == doctest::Approx(0.5));
    CHECK(adam.steps_taken() == 1);
  }

  TEST_CASE("adam clips the global gradient norm and skips frozen parameters") {
    ParamSet ps;
    Param& a = ps.add("a", {1});
    Param& b = ps.add("b", {1});
    b.trainable = false;
    Adam adam(ps, AdamConfig{1e-3, 0.9, 0.999, 1e-8, 1.0});
    GradSet g = zero_grads(ps);
    g[0][0] = 3.0;
    g[1][0] = 4.0;
    const double norm = adam.step(ps, g);
    CHECK(norm == doctest::Approx(3.0));  // frozen gradients do not count
    CHECK(b.value[0] == 0.0);
    CHECK(a.value[0] < 0.0);
  }

  TEST_CASE("duplicate parameter names are rejected") {
    ParamSet ps;
    ps.add("x", {1});
    CHECK_THROWS_AS(ps.add("x", {2}), ConfigError);
  }
}
