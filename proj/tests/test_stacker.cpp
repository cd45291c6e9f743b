#include <algorithm>
#include <chrono>
#include <random>

#include "doctest.h"
#include "evdi/errors.hpp"
#include "evdi/stacker.hpp"
#include "stacker_reference.hpp"

using namespace evdi;
using namespace evdi::testing;

TEST_SUITE("stacker") {
  TEST_CASE("eight positive events at one pixel fill every stack") {
    std::vector<EventRecord> r;
    for (std::uint64_t t = 1; t <= 8; ++t) r.push_back({t, 1, 1, 1});
    const EventStream s(SensorSize{4, 3}, r);
    const Tensor counts = multistack_counts(s, 0, 8, StackerConfig{});
    CHECK(counts.at(0, 1, 1) == 8);
    CHECK(counts.at(2, 1, 1) == 4);
    CHECK(counts.at(4, 1, 1) == 2);
    const Tensor norm = build_multistack(s, 0, 8, StackerConfig{});
    CHECK(norm.shape() == std::vector<int>{6, 3, 4});
    double total = 0;
    for (double v : norm.values()) total += v;
    CHECK(norm.at(0, 1, 1) == 1.0);
    CHECK(norm.at(2, 1, 1) == 1.0);
    CHECK(norm.at(4, 1, 1) == 1.0);
    CHECK(total == 3.0);
  }

  TEST_CASE("empty window yields a zero tensor and bad windows are rejected") {
    const EventStream s(SensorSize{4, 3}, {});
    const Tensor t = build_multistack(s, 0, 10, StackerConfig{});
    CHECK(t.shape() == std::vector<int>{6, 3, 4});
    for (double v : t.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(build_multistack(s, 10, 10, StackerConfig{}), ArgumentError);
    CHECK_THROWS_AS(build_multistack(s, 0, 10, StackerConfig{0, StackNormalization::per_stack_max}), ArgumentError);
  }

  TEST_CASE("halving rule agrees with a brute-force reference, with nesting") {
    const HalvingSuiteResult r = run_halving_suite(300, 9);
    CHECK(r.trials == 300);
    CHECK(r.mismatches == 0);
    CHECK(r.nesting_faults == 0);
    CHECK(r.seconds < 5.0);
  }

  TEST_CASE("stack 0 carries the signed polarity sum of the window") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      const EventStream s = random_stream(rng, SensorSize{5, 4}, rng() % 90, 1 + rng() % 60);
      const std::uint64_t a = rng() % 30, b = a + 1 + rng() % 40;
      const Tensor got = multistack_counts(s, a, b, StackerConfig{});
      double signed_sum = 0;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) signed_sum += got.at(0, y, x) - got.at(1, y, x);
      CHECK(signed_sum == static_cast<double>(slice_events(s, a, b).signed_polarity_sum()));
    }
  }

  TEST_CASE("normalization modes bound values to [0, 1]") {
    std::mt19937_64 rng(10);
    const EventStream s = random_stream(rng, SensorSize{6, 6}, 200, 100);
    for (auto mode : {StackNormalization::per_stack_max, StackNormalization::global_max}) {
      const Tensor t = build_multistack(s, 0, 100, StackerConfig{3, mode});
      double hi = 0;
      for (double v : t.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        hi = std::max(hi, v);
      }
      CHECK(hi == 1.0);
    }
  }

  TEST_CASE("control sequence aligns one tensor per frame") {
    std::mt19937_64 rng(11);
    const EventStream s = random_stream(rng, SensorSize{4, 4}, 100, 100);
    const std::vector<std::uint64_t> ft{0, 25, 50, 99};
    const auto seq = build_control_sequence(s, ft, StackerConfig{});
    REQUIRE(seq.size() == 4);
    for (double v : seq[0].values()) CHECK(v == 0.0);
    for (std::size_t i = 1; i < ft.size(); ++i) {
      const Tensor counts = multistack_counts(s, ft[i - 1], ft[i], StackerConfig{});
      double n = 0;
      for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
          for (int x = 0; x < 4; ++x) n += counts.at(c, y, x);
      CHECK(n == static_cast<double>(slice_events(s, ft[i - 1], ft[i]).size()));
      CHECK(seq[i] == build_multistack(s, ft[i - 1], ft[i], StackerConfig{}));
    }
    const auto early = build_control_sequence(s, {200, 300}, StackerConfig{});
    for (double v : early[1].values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(build_control_sequence(s, {0, 10, 10}, StackerConfig{}), ArgumentError);
  }

  TEST_CASE("identical inputs give bit-identical tensors") {
    std::mt19937_64 rng(12);
    const EventStream s = random_stream(rng, SensorSize{4, 4}, 64, 50);
    CHECK(build_multistack(s, 0, 50, StackerConfig{}) == build_multistack(s, 0, 50, StackerConfig{}));
  }
}
