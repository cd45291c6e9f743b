#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "doctest.h"
#include "evdi/codec.hpp"
#include "evdi/errors.hpp"
#include "evdi/metrics.hpp"
#include "helpers.hpp"

using namespace evdi;
using evdi::testing::random_tensor;

namespace {

Tensor pattern(const std::function<double(int, int)>& fn, int h = 48, int w = 48) {
  Tensor t({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) t.at(0, y, x) = fn(y, x);
  return t;
}

}  // namespace

TEST_SUITE("codec") {
  TEST_CASE("lossless rearrangement round-trips exactly, including padded sizes") {
    std::mt19937_64 rng(1);
    for (auto shape : {std::vector<int>{3, 1, 16, 16}, std::vector<int>{2, 3, 13, 10}, std::vector<int>{1, 2, 5, 7}}) {
      const Tensor v = random_tensor(shape, rng, 0.0, 1.0);
      const CodecConfig cfg{CodecKind::lossless_rearrange, 4, 1};
      const Tensor z = encode(v, cfg);
      CHECK(z.dim(1) == shape[1] * 16);
      CHECK(z.dim(2) == (shape[2] + 3) / 4);
      CHECK(decode(z, cfg, shape[1], {shape[2], shape[3]}) == v);
      CHECK(codec_roundtrip(v, cfg) == v);
    }
  }

  TEST_CASE("pooling codec reproduces constants and averages a checkerboard") {
    const CodecConfig cfg{CodecKind::lossy_pool, 4, 1};
    const Tensor flat({2, 1, 16, 12}, 0.37);
    const Tensor rec = codec_roundtrip(flat, cfg);
    for (double v : rec.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    Tensor checker({1, 1, 16, 16});
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) checker.at(0, 0, y, x) = (x + y) % 2;
    const Tensor z = encode(checker, cfg), back = codec_roundtrip(checker, cfg);
    for (double v : z.values()) CHECK(v == doctest::Approx(0.5));
    for (double v : back.values()) CHECK(v == doctest::Approx(0.5));
  }

  TEST_CASE("pooling codec is linear") {
    std::mt19937_64 rng(2);
    const CodecConfig cfg{CodecKind::lossy_pool, 4, 2};
    const Tensor a = random_tensor({2, 1, 12, 12}, rng), b = random_tensor({2, 1, 12, 12}, rng);
    Tensor mix = a;
    mix *= 2.0;
    Tensor b3 = b;
    b3 *= -3.0;
    mix += b3;
    Tensor want = codec_roundtrip(a, cfg);
    want *= 2.0;
    Tensor rb = codec_roundtrip(b, cfg);
    rb *= -3.0;
    want += rb;
    const Tensor got = codec_roundtrip(mix, cfg);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  TEST_CASE("bilinear upsampling keeps constants and matches hand values") {
    const Tensor v({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
    const Tensor up = upsample_bilinear(v, 2);
    REQUIRE(up.shape() == std::vector<int>{1, 1, 2, 4});
    CHECK(up.at(0, 0, 0, 0) == doctest::Approx(0.0));
    CHECK(up.at(0, 0, 0, 1) == doctest::Approx(0.25));
    CHECK(up.at(0, 0, 0, 2) == doctest::Approx(0.75));
    CHECK(up.at(0, 0, 0, 3) == doctest::Approx(1.0));
    CHECK(downsample_area(up, 2).at(0, 0, 0, 0) == doctest::Approx(0.125));
  }

  TEST_CASE("upsampled round-trip PSNR matches independently computed values") {
    // 48x48 patterns, pooling codec d = 4, bilinear decode; columns u = 1, 2, 3.
    const double pi = std::numbers::pi;
    struct Row {
      std::function<double(int, int)> fn;
      double want[3];
    };
    const std::vector<Row> rows{
        {[](int y, int x) { return static_cast<double>((y / 2 + x / 2) % 2); }, {6.020600, 7.501506, 7.807767}},
        {[](int y, int x) { return static_cast<double>((y / 3 + x / 3) % 2); }, {6.041732, 7.995333, 10.042858}},
        {[pi](int y, int x) { return 0.5 + 0.5 * std::sin(2 * pi * (x + y) / 6.0); }, {9.044433, 11.487230, 14.737620}},
        {[](int, int x) { return ((x / 3) % 2) * 0.8 + 0.1; }, {8.281517, 12.763007, 15.331358}},
        {[pi](int y, int x) { return 0.5 + 0.5 * std::cos(2 * pi * std::hypot(y - 24 + 0.5, x - 24 + 0.5) / 5.0); },
         {9.167278, 12.851350, 16.749985}},
    };
    const CodecConfig cfg{CodecKind::lossy_pool, 4, 1};
    for (const auto& row : rows) {
      const Tensor img = pattern(row.fn);
      for (int u = 1; u <= 3; ++u) CHECK(std::abs(upsampled_roundtrip_psnr(img, cfg, u) - row.want[u - 1]) < 1e-5);
    }
  }

  TEST_CASE("round-trip PSNR rises with upsampling on high-frequency content") {
    const CodecConfig cfg{CodecKind::lossy_pool, 4, 1};
    const Tensor img = pattern([](int, int x) { return ((x / 3) % 2) * 0.8 + 0.1; });
    double prev = 0;
    for (int u = 1; u <= 4; ++u) {
      const double p = upsampled_roundtrip_psnr(img, cfg, u);
      CHECK(p > prev);
      prev = p;
    }
  }

  TEST_CASE("invalid configurations and shapes are rejected") {
    CHECK_THROWS_AS(validate(CodecConfig{CodecKind::lossy_pool, 0, 1}), ConfigError);
    CHECK_THROWS_AS(validate(CodecConfig{CodecKind::lossy_pool, 4, 0}), ConfigError);
    CHECK_THROWS_AS(encode(Tensor({1, 4, 4}), CodecConfig{}), ArgumentError);
    CHECK_THROWS_AS(decode(Tensor({1, 3, 2, 2}), CodecConfig{}, 1), ArgumentError);
    CHECK_THROWS_AS(downsample_area(Tensor({1, 1, 5, 4}), 2), ArgumentError);
  }
}
