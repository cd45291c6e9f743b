#include <cmath>
#include <random>

#include "doctest.h"
#include "evdi/diffusion.hpp"
#include "evdi/errors.hpp"
#include "helpers.hpp"

using namespace evdi;
using evdi::testing::random_tensor;

namespace {

class ShiftedOracle final : public Denoiser {
 public:
  ShiftedOracle(GaussianOracle o, NoiseSchedule s, double shift) : o_(std::move(o)), s_(std::move(s)), shift_(shift) {}
  Tensor predict_noise(const Tensor& z, int k, const Tensor&, const Tensor&) const override {
    Tensor e = oracle_predict_noise(z, k, o_, s_);
    for (double& v : e.values()) v += shift_;
    return e;
  }

 private:
  GaussianOracle o_;
  NoiseSchedule s_;
  double shift_;
};

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("schedule is variance preserving and monotone") {
    const NoiseSchedule s = make_schedule();
    REQUIRE(s.steps == 50);
    REQUIRE(s.alpha.size() == 51);
    CHECK(s.alpha[0] == 1.0);
    CHECK(s.sigma[0] == 0.0);
    CHECK(s.betas.front() == doctest::Approx(1e-4));
    CHECK(s.betas.back() == doctest::Approx(0.2));
    for (int k = 0; k <= 50; ++k) {
      CHECK(s.alpha[k] * s.alpha[k] + s.sigma[k] * s.sigma[k] == doctest::Approx(1.0).epsilon(1e-14));
      if (k > 0) {
        CHECK(s.sigma[k] > s.sigma[k - 1]);
        CHECK(s.alpha[k] < s.alpha[k - 1]);
      }
    }
    CHECK(s.sigma[50] > 0.99);
  }

  TEST_CASE("sigma(N) for betas in [1e-4, 0.04] matches an independent product") {
    // Reference from a separate float64 cumulative product of 1 - beta_j.
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.04);
    CHECK(s.sigma[50] == doctest::Approx(0.7987876801910374).epsilon(1e-12));
  }

  TEST_CASE("schedule JSON round-trips and bad inputs are rejected") {
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
    const NoiseSchedule back = NoiseSchedule::from_json(s.to_json());
    CHECK(back.betas == s.betas);
    CHECK(back.sigma == s.sigma);
    CHECK_THROWS_AS(make_schedule(0), ArgumentError);
    CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), ArgumentError);
    CHECK_THROWS_AS(schedule_from_betas({0.1, 1.0}), ArgumentError);
  }

  TEST_CASE("ddim step inverts forward diffusion given the true noise") {
    const NoiseSchedule s = make_schedule();
    std::mt19937_64 rng(3);
    const Tensor x0 = random_tensor({2, 3, 4, 4}, rng);
    const Tensor eps = standard_normal(x0.shape(), rng);
    for (int k = 1; k <= s.steps; ++k) {
      const Tensor zk = forward_diffuse(x0, k, eps, s);
      const Tensor prev = ddim_step(zk, eps, k, s);
      const Tensor want = forward_diffuse(x0, k - 1, eps, s);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(prev[i] - want[i]) < 1e-9);
    }
    CHECK(forward_diffuse(x0, 0, eps, s) == x0);
  }

  TEST_CASE("oracle noise prediction matches the closed form s(z - a m) / (a^2 v + s^2)") {
    const NoiseSchedule s = make_schedule();
    std::mt19937_64 rng(4);
    const GaussianOracle o{random_tensor({1, 1, 3, 3}, rng), random_tensor({1, 1, 3, 3}, rng, 0.1, 2.0)};
    const Tensor z = random_tensor({1, 1, 3, 3}, rng, -2, 2);
    for (int k : {1, 10, 25, 50}) {
      const double a = s.alpha[k], sg = s.sigma[k];
      const Tensor e = oracle_predict_noise(z, k, o, s);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double want = sg * (z[i] - a * o.mean[i]) / (a * a * o.variance[i] + sg * sg);
        CHECK(e[i] == doctest::Approx(want).epsilon(1e-12));
      }
    }
    CHECK_THROWS_AS(oracle_predict_noise(z, 0, o, s), ArgumentError);
  }

  TEST_CASE("the oracle attains lower loss than shifted predictors on the same draws") {
    const NoiseSchedule s = make_schedule();
    std::mt19937_64 rng(5);
    const GaussianOracle o{Tensor({1, 1, 4, 4}, 0.3), Tensor({1, 1, 4, 4}, 0.5)};
    std::vector<NoisedSample> batch;
    for (int i = 0; i < 400; ++i) {
      NoisedSample n;
      n.x0 = standard_normal(o.mean.shape(), rng);
      for (std::size_t j = 0; j < n.x0.size(); ++j) n.x0[j] = o.mean[j] + std::sqrt(o.variance[j]) * n.x0[j];
      n.k = 1 + static_cast<int>(rng() % 50);
      n.eps = standard_normal(o.mean.shape(), rng);
      batch.push_back(std::move(n));
    }
    const double base = noise_prediction_loss(ShiftedOracle(o, s, 0.0), batch, s);
    for (double shift : {-0.2, 0.2}) CHECK(noise_prediction_loss(ShiftedOracle(o, s, shift), batch, s) > base);
    CHECK(base < 1.0);
  }

  TEST_CASE("standard normal draws have unit moments") {
    std::mt19937_64 rng(6);
    const Tensor e = standard_normal({100000}, rng);
    double m = 0, m2 = 0;
    for (double v : e.values()) {
      m += v;
      m2 += v * v;
    }
    m /= 1e5;
    m2 /= 1e5;
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(m2 - 1.0) < 0.03);
  }

  TEST_CASE("oracle DDIM chain is deterministic for a fixed seed") {
    const NoiseSchedule s = make_schedule();
    const GaussianOracle o{Tensor({1, 1, 2, 2}, 0.5), Tensor({1, 1, 2, 2}, 0.2)};
    const GaussianOracleDenoiser d(o, s);
    std::mt19937_64 a(7), b(7);
    CHECK(sample_ddim(d, {1, 1, 2, 2}, Tensor(), Tensor(), s, a) == sample_ddim(d, {1, 1, 2, 2}, Tensor(), Tensor(), s, b));
  }
}
