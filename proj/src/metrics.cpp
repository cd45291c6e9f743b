#include "evdi/metrics.hpp"

#include <cmath>
#include <sstream>

#include "evdi/errors.hpp"

namespace evdi {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_value) {
  require_same_shape(a, b, "psnr");
  if (!(max_value > 0.0)) throw ArgumentError("psnr: max_value must be positive");
  if (a.empty()) throw ArgumentError("psnr: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

double ssim(const Tensor& a, const Tensor& b, double max_value) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw ArgumentError("ssim: expected [C,H,W] images");
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (h < kWindow || w < kWindow) throw ArgumentError("ssim: image smaller than the 11x11 window");
  const double c1 = (0.01 * max_value) * (0.01 * max_value);
  const double c2 = (0.03 * max_value) * (0.03 * max_value);
  const auto k = gaussian_window();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    std::vector<double> x(a.data() + c * plane, a.data() + (c + 1) * plane);
    std::vector<double> y(b.data() + c * plane, b.data() + (c + 1) * plane);
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / channels;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    frames.push_back({{"index", indices[i]}, {"psnr", psnr[i]}, {"ssim", ssim[i]}});
  }
  return {{"frames", frames},
          {"mean_psnr", mean_psnr},
          {"mean_ssim", mean_ssim},
          {"roundtrip", roundtrip},
          {"lpips", nullptr},
          {"note", "LPIPS not computed (requires pretrained perceptual weights)"}};
}

EvalReport evaluate_clip(const Tensor& predicted, const Tensor& ground_truth, const std::vector<int>& indices,
                         const CodecConfig& codec, bool roundtrip) {
  require_same_shape(predicted, ground_truth, "evaluate_clip");
  if (predicted.rank() != 4) throw ArgumentError("evaluate_clip: expected [F,C,H,W] videos");
  for (int i : indices) {
    if (i < 0 || i >= predicted.dim(0)) {
      throw ArgumentError("evaluate_clip: frame index " + std::to_string(i) + " out of range [0, " +
                          std::to_string(predicted.dim(0)) + ")");
    }
  }
  const Tensor pred = roundtrip ? codec_roundtrip(predicted, codec) : predicted;
  const Tensor gt = roundtrip ? codec_roundtrip(ground_truth, codec) : ground_truth;
  EvalReport r;
  r.roundtrip = roundtrip;
  r.indices = indices;
  for (int i : indices) {
    const Tensor a = frame_image(pred, i), b = frame_image(gt, i);
    r.psnr.push_back(psnr(a, b, 1.0));
    r.ssim.push_back(ssim(a, b, 1.0));
  }
  if (!indices.empty()) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      r.mean_psnr += r.psnr[i];
      r.mean_ssim += r.ssim[i];
    }
    r.mean_psnr /= static_cast<double>(indices.size());
    r.mean_ssim /= static_cast<double>(indices.size());
  }
  return r;
}

std::string summary_csv(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "clip,frames,mean_psnr,mean_ssim,roundtrip\n";
  double p = 0.0, s = 0.0;
  for (const auto& [name, r] : reports) {
    os << name << ',' << r.indices.size() << ',' << r.mean_psnr << ',' << r.mean_ssim << ','
       << (r.roundtrip ? 1 : 0) << '\n';
    p += r.mean_psnr;
    s += r.mean_ssim;
  }
  if (!reports.empty()) {
    const double n = static_cast<double>(reports.size());
    os << "mean," << reports.size() << ',' << p / n << ',' << s / n << ','
       << (reports.front().second.roundtrip ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace evdi
