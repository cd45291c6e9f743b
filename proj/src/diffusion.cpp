#include "evdi/diffusion.hpp"

#include <cmath>

#include "evdi/errors.hpp"

namespace evdi {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ArgumentError("schedule: need at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  s.alpha.assign(betas.size() + 1, 1.0);
  s.sigma.assign(betas.size() + 1, 0.0);
  double alpha_bar = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    if (!(betas[j] > 0.0 && betas[j] < 1.0)) throw ArgumentError("schedule: betas must lie in (0, 1)");
    alpha_bar *= 1.0 - betas[j];
    s.alpha[j + 1] = std::sqrt(alpha_bar);
    s.sigma[j + 1] = std::sqrt(1.0 - alpha_bar);
  }
  s.betas = std::move(betas);
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ArgumentError("make_schedule: steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ArgumentError("make_schedule: require 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(j) / (steps - 1);
    betas[static_cast<std::size_t>(j)] = beta_min + (beta_max - beta_min) * frac;
  }
  return schedule_from_betas(std::move(betas));
}

nlohmann::json NoiseSchedule::to_json() const { return {{"N_steps", steps}, {"betas", betas}}; }

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  std::vector<double> betas;
  int n = 0;
  try {
    betas = j.at("betas").get<std::vector<double>>();
    n = j.at("N_steps").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  if (n != static_cast<int>(betas.size())) throw ConfigError("schedule: N_steps does not match betas length");
  return schedule_from_betas(std::move(betas));
}

namespace {

void check_step(const NoiseSchedule& s, int k, const char* what) {
  if (k < 0 || k > s.steps) throw ArgumentError(std::string(what) + ": step index out of range");
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, int k, const Tensor& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_diffuse");
  check_step(schedule, k, "forward_diffuse");
  const double a = schedule.alpha[static_cast<std::size_t>(k)], s = schedule.sigma[static_cast<std::size_t>(k)];
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

Tensor standard_normal(const std::vector<int>& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v = n(rng);
  return t;
}

double noise_prediction_loss(const Denoiser& denoiser, const std::vector<NoisedSample>& batch,
                             const NoiseSchedule& schedule) {
  if (batch.empty()) throw ArgumentError("noise_prediction_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const Tensor zk = forward_diffuse(s.x0, s.k, s.eps, schedule);
    const Tensor pred = denoiser.predict_noise(zk, s.k, s.i_cond, s.e_cond);
    require_same_shape(pred, s.eps, "noise_prediction_loss");
    double se = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - s.eps[i];
      se += d * d;
    }
    total += se / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(batch.size());
}

double training_loss(const Denoiser& denoiser, const Tensor& x0, const Tensor& i_cond, const Tensor& e_cond,
                     const NoiseSchedule& schedule, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, schedule.steps);
  NoisedSample s{x0, i_cond, e_cond, pick(rng), {}};
  s.eps = standard_normal(x0.shape(), rng);
  return noise_prediction_loss(denoiser, {s}, schedule);
}

Tensor ddim_step(const Tensor& z, const Tensor& eps_hat, int k, const NoiseSchedule& schedule) {
  require_same_shape(z, eps_hat, "ddim_step");
  if (k < 1 || k > schedule.steps) throw ArgumentError("ddim_step: k must be in [1, N]");
  const auto ks = static_cast<std::size_t>(k);
  const double a = schedule.alpha[ks], s = schedule.sigma[ks];
  const double a_prev = schedule.alpha[ks - 1], s_prev = schedule.sigma[ks - 1];
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x0_hat = (z[i] - s * eps_hat[i]) / a;
    out[i] = a_prev * x0_hat + s_prev * eps_hat[i];
  }
  return out;
}

Tensor oracle_predict_noise(const Tensor& z, int k, const GaussianOracle& oracle, const NoiseSchedule& schedule) {
  require_same_shape(z, oracle.mean, "oracle_predict_noise");
  require_same_shape(z, oracle.variance, "oracle_predict_noise");
  if (k < 1 || k > schedule.steps) throw ArgumentError("oracle_predict_noise: k must be in [1, N] (sigma > 0)");
  const double a = schedule.alpha[static_cast<std::size_t>(k)], s = schedule.sigma[static_cast<std::size_t>(k)];
  const double s2 = s * s;
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = oracle.variance[i];
    if (!(v > 0.0)) throw ArgumentError("oracle_predict_noise: variance must be positive");
    const double x0_hat = (oracle.mean[i] / v + a * z[i] / s2) / (1.0 / v + a * a / s2);
    out[i] = (z[i] - a * x0_hat) / s;
  }
  return out;
}

GaussianOracleDenoiser::GaussianOracleDenoiser(GaussianOracle oracle, NoiseSchedule schedule)
    : oracle_(std::move(oracle)), schedule_(std::move(schedule)) {}

Tensor GaussianOracleDenoiser::predict_noise(const Tensor& z, int k, const Tensor&, const Tensor&) const {
  return oracle_predict_noise(z, k, oracle_, schedule_);
}

Tensor sample_ddim(const Denoiser& denoiser, const std::vector<int>& shape, const Tensor& i_cond,
                   const Tensor& e_cond, const NoiseSchedule& schedule, std::mt19937_64& rng) {
  Tensor z = standard_normal(shape, rng);
  for (int k = schedule.steps; k >= 1; --k) {
    z = ddim_step(z, denoiser.predict_noise(z, k, i_cond, e_cond), k, schedule);
  }
  return z;
}

}  // namespace evdi
