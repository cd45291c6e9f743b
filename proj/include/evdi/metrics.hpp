#pragma once

#include <string>
#include <utility>
#include <vector>

#include "evdi/codec.hpp"
#include "evdi/tensor.hpp"
#include "json.hpp"

namespace evdi {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(max^2 / MSE); kPsnrCap when MSE is zero.
double psnr(const Tensor& a, const Tensor& b, double max_value = 1.0);

// Windowed SSIM (11x11 Gaussian, sigma 1.5, K1 0.01, K2 0.03) averaged over
// all fully-contained windows and over channels. Takes [C,H,W] images.
double ssim(const Tensor& a, const Tensor& b, double max_value = 1.0);

struct EvalReport {
  std::vector<int> indices;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  bool roundtrip = false;

  nlohmann::json to_json() const;
};

// Scores predicted frames against ground truth at `indices`. With roundtrip,
// both sides pass through the codec (including its upsample factor) first.
EvalReport evaluate_clip(const Tensor& predicted, const Tensor& ground_truth, const std::vector<int>& indices,
                         const CodecConfig& codec, bool roundtrip);

// One row per named report plus a final "mean" row (equal clip weights).
std::string summary_csv(const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace evdi
