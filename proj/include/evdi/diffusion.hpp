#pragma once

#include <random>
#include <vector>

#include "evdi/tensor.hpp"
#include "json.hpp"

namespace evdi {

// Variance-preserving discrete schedule. Index k = 0 is the clean end.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas;  // beta_1 .. beta_N
  std::vector<double> alpha;  // alpha(0) .. alpha(N)
  std::vector<double> sigma;  // sigma(0) .. sigma(N)

  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);
};

inline constexpr int kDefaultSteps = 50;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.2;

// Linear betas; alpha_bar(k) = prod_{j<=k} (1 - beta_j).
NoiseSchedule make_schedule(int steps = kDefaultSteps, double beta_min = kDefaultBetaMin,
                            double beta_max = kDefaultBetaMax);
// Schedule from explicit betas (JSON load path).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

// Predicts the noise added to a latent at step k given image and event
// conditioning latents. Implementations must be safe for concurrent calls.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond) const = 0;
};

// x_k = alpha(k) x0 + sigma(k) eps
Tensor forward_diffuse(const Tensor& x0, int k, const Tensor& eps, const NoiseSchedule& schedule);

Tensor standard_normal(const std::vector<int>& shape, std::mt19937_64& rng);

struct NoisedSample {
  Tensor x0;
  Tensor i_cond;
  Tensor e_cond;
  int k = 1;
  Tensor eps;
};

// Mean over samples of mean((eps_hat - eps)^2) for fixed (k, eps) draws.
double noise_prediction_loss(const Denoiser& denoiser, const std::vector<NoisedSample>& batch,
                             const NoiseSchedule& schedule);

// Draws k ~ U{1..N} and eps ~ N(0, I), returns mean((eps_hat - eps)^2).
double training_loss(const Denoiser& denoiser, const Tensor& x0, const Tensor& i_cond, const Tensor& e_cond,
                     const NoiseSchedule& schedule, std::mt19937_64& rng);

// Deterministic update: x0_hat = (z - sigma(k) eps_hat) / alpha(k);
// z_{k-1} = alpha(k-1) x0_hat + sigma(k-1) eps_hat.
Tensor ddim_step(const Tensor& z, const Tensor& eps_hat, int k, const NoiseSchedule& schedule);

// Independent Gaussian data x0 ~ N(mean, variance) elementwise.
struct GaussianOracle {
  Tensor mean;
  Tensor variance;
};

// Exact posterior-mean noise prediction for Gaussian data.
Tensor oracle_predict_noise(const Tensor& z, int k, const GaussianOracle& oracle, const NoiseSchedule& schedule);

class GaussianOracleDenoiser final : public Denoiser {
 public:
  GaussianOracleDenoiser(GaussianOracle oracle, NoiseSchedule schedule);
  Tensor predict_noise(const Tensor& z, int k, const Tensor& i_cond, const Tensor& e_cond) const override;

 private:
  GaussianOracle oracle_;
  NoiseSchedule schedule_;
};

// Full untiled DDIM chain from z_N ~ N(0, I) down to z_0.
Tensor sample_ddim(const Denoiser& denoiser, const std::vector<int>& shape, const Tensor& i_cond,
                   const Tensor& e_cond, const NoiseSchedule& schedule, std::mt19937_64& rng);

}  // namespace evdi
