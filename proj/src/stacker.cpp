#include "evdi/stacker.hpp"

#include <algorithm>

#include "evdi/errors.hpp"
#include "evdi/image_io.hpp"

namespace evdi {

Tensor multistack_counts(const EventStream& stream, std::uint64_t t_prev, std::uint64_t t_target,
                         const StackerConfig& cfg) {
  if (cfg.stacks < 1) throw ArgumentError("stacker: stack count must be >= 1");
  if (t_prev >= t_target) {
    throw ArgumentError("build_multistack: t_prev " + std::to_string(t_prev) + " >= t_target " +
                        std::to_string(t_target));
  }
  const int h = stream.height(), w = stream.width();
  Tensor counts({2 * cfg.stacks, h, w});
  const EventStream window = slice_events(stream, t_prev, t_target);
  const auto& recs = window.records();
  const std::size_t n = recs.size();
  if (n == 0) return counts;

  for (int m = 0; m < cfg.stacks; ++m) {
    // ceil(n / 2^m) without overflow for large m.
    std::size_t keep = n;
    for (int i = 0; i < m && keep > 1; ++i) keep = (keep + 1) / 2;
    const std::uint64_t cutoff = recs[n - keep].t;
    auto first = std::lower_bound(recs.begin(), recs.end(), cutoff,
                                  [](const EventRecord& r, std::uint64_t t) { return r.t < t; });
    for (auto it = first; it != recs.end(); ++it) {
      counts.at(2 * m + (it->p > 0 ? 0 : 1), it->y, it->x) += 1.0;
    }
  }
  return counts;
}

Tensor build_multistack(const EventStream& stream, std::uint64_t t_prev, std::uint64_t t_target,
                        const StackerConfig& cfg) {
  Tensor t = multistack_counts(stream, t_prev, t_target, cfg);
  const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  auto stack_max = [&](int m) {
    const double* p = t.data() + 2 * m * plane;
    return *std::max_element(p, p + 2 * plane);
  };
  if (cfg.normalization == StackNormalization::per_stack_max) {
    for (int m = 0; m < cfg.stacks; ++m) {
      const double mx = stack_max(m);
      if (mx <= 0.0) continue;
      double* p = t.data() + 2 * m * plane;
      for (std::size_t i = 0; i < 2 * plane; ++i) p[i] /= mx;
    }
  } else {
    double mx = 0.0;
    for (int m = 0; m < cfg.stacks; ++m) mx = std::max(mx, stack_max(m));
    if (mx > 0.0) t *= 1.0 / mx;
  }
  return t;
}

std::vector<Tensor> build_control_sequence(const EventStream& stream,
                                           const std::vector<std::uint64_t>& frame_times,
                                           const StackerConfig& cfg) {
  if (frame_times.size() < 2) throw ArgumentError("build_control_sequence: need at least 2 frame times");
  for (std::size_t i = 1; i < frame_times.size(); ++i) {
    if (frame_times[i] <= frame_times[i - 1]) {
      throw ArgumentError("build_control_sequence: frame times must be strictly increasing");
    }
  }
  std::vector<Tensor> out;
  out.reserve(frame_times.size());
  out.emplace_back(std::vector<int>{2 * cfg.stacks, stream.height(), stream.width()});
  for (std::size_t i = 1; i < frame_times.size(); ++i) {
    out.push_back(build_multistack(stream, frame_times[i - 1], frame_times[i], cfg));
  }
  return out;
}

void dump_stack_pgm(const Tensor& stack, const std::string& prefix) {
  for (int c = 0; c < stack.dim(0); ++c) {
    Tensor plane({1, stack.dim(1), stack.dim(2)});
    for (int y = 0; y < stack.dim(1); ++y)
      for (int x = 0; x < stack.dim(2); ++x) plane.at(0, y, x) = stack.at(c, y, x);
    write_pnm(prefix + "_c" + std::to_string(c) + ".pgm", plane, 255);
  }
}

}  // namespace evdi
