#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "upsam/errors.hpp"
#include "upsam/protocol.hpp"
#include "upsam/raster.hpp"

using namespace upsam;

TEST_CASE("gaussian degradation kernel hits the requested response") {
  for (const double gain : {0.15, 0.29, 0.5}) {
    for (const int factor : {2, 4, 6}) {
      const std::vector<double> k = mtf_kernel(gain, factor);
      REQUIRE(k.size() % 2 == 1);

      double sum = 0;
      for (double v : k) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

      // Response at the decimated grid's highest representable frequency.
      const double nyquist = std::numbers::pi / factor;
      CHECK(std::abs(oracle::dft_gain(k, nyquist) - gain) < 1e-3);
    }
  }
  CHECK_THROWS_AS(mtf_kernel(0.0, 4), ConfigError);
  CHECK_THROWS_AS(mtf_kernel(1.0, 4), ConfigError);
  CHECK_THROWS_AS(mtf_kernel(0.29, 1), ConfigError);
}

TEST_CASE("windowed sinc kernel basics") {
  const std::vector<double> k = sinc_kernel(4, 41);
  REQUIRE(k.size() == 41);
  double sum = 0;
  for (double v : k) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  // Symmetric.
  for (int i = 0; i < 20; ++i) CHECK(k[i] == doctest::Approx(k[40 - i]));

  CHECK_THROWS_AS(sinc_kernel(4, 40), ConfigError);
  CHECK_THROWS_AS(sinc_kernel(4, 1), ConfigError);
  CHECK_THROWS_AS(sinc_kernel(1, 41), ConfigError);
}

TEST_CASE("msi degradation matches a dense 2-d convolution oracle") {
  const RasterImage img = oracle::random_raster(16, 16, 2, 99);
  DegradeConfig cfg;
  cfg.factor = 4;
  cfg.mtf_gains = {0.29, 0.45};

  const RasterImage out = mtf_degrade_msi(img, cfg);
  REQUIRE(out.width == 4);
  REQUIRE(out.height == 4);
  REQUIRE(out.bands == 2);

  for (int b = 0; b < 2; ++b) {
    const std::vector<double> k = mtf_kernel(cfg.mtf_gains[b], cfg.factor);
    const std::vector<double> src(img.band_data(b),
                                  img.band_data(b) + img.pixels());
    const std::vector<double> full = oracle::conv2_mirror(src, 16, 16, k);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(out.at(b, y, x) ==
              doctest::Approx(full[static_cast<std::size_t>(4 * y) * 16 +
                                   4 * x])
                  .epsilon(1e-10));
  }
}

TEST_CASE("degradation preserves constants and rejects bad shapes") {
  const RasterImage flat(12, 8, 3, 0.625);
  DegradeConfig cfg;
  cfg.factor = 4;
  const RasterImage out = mtf_degrade_msi(flat, cfg);
  REQUIRE(out.width == 3);
  REQUIRE(out.height == 2);
  for (double v : out.samples) CHECK(v == doctest::Approx(0.625).epsilon(1e-10));

  CHECK_THROWS_AS(mtf_degrade_msi(RasterImage(13, 8, 3, 0.1), cfg),
                  DimensionError);

  DegradeConfig wrong = cfg;
  wrong.mtf_gains = {0.2, 0.3};  // 2 gains, 3 bands
  CHECK_THROWS_AS(mtf_degrade_msi(flat, wrong), ConfigError);

  DegradeConfig bad = cfg;
  bad.mtf_gains = {1.5};
  CHECK_THROWS_AS(validate_degrade_config(bad), ConfigError);
  bad = cfg;
  bad.pan_taps = 10;
  CHECK_THROWS_AS(validate_degrade_config(bad), ConfigError);
  bad = cfg;
  bad.factor = 1;
  CHECK_THROWS_AS(validate_degrade_config(bad), ConfigError);
}

TEST_CASE("impulse response of the degradation filter is the kernel") {
  // gain 0.5 at factor 2 keeps the kernel short enough to index by hand.
  // Radius must stay <= 4 so the boundary reflections cannot reach the
  // centered impulse and the closed-form expectation below stays exact.
  const std::vector<double> k = mtf_kernel(0.5, 2);
  const int radius = static_cast<int>(k.size()) / 2;
  REQUIRE(radius >= 1);
  REQUIRE(radius <= 4);

  RasterImage img(8, 8, 1, 0.0);
  img.at(0, 4, 4) = 1.0;
  DegradeConfig cfg;
  cfg.factor = 2;
  cfg.mtf_gains = {0.5};
  const RasterImage out = mtf_degrade_msi(img, cfg);

  // out(y, x) samples the filtered plane at (2y, 2x); the impulse puts
  // k[2y-4+radius]*k[2x-4+radius] there.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const int ty = 2 * y - 4 + radius, tx = 2 * x - 4 + radius;
      double expect = 0;
      if (ty >= 0 && ty < static_cast<int>(k.size()) && tx >= 0 &&
          tx < static_cast<int>(k.size()))
        expect = k[ty] * k[tx];
      CHECK(out.at(0, y, x) == doctest::Approx(expect).epsilon(1e-12));
    }
}

namespace {

// Least-squares amplitude of a known-frequency sinusoid over a sample
// window: project onto {sin, cos, 1}.
double fitted_amplitude(const std::vector<double>& v, double omega) {
  const int n = static_cast<int>(v.size());
  double ss = 0, sc = 0, cc = 0, s1 = 0, c1 = 0, n1 = n;
  double sy = 0, cy = 0, y1 = 0;
  for (int i = 0; i < n; ++i) {
    const double s = std::sin(omega * i), c = std::cos(omega * i);
    ss += s * s;
    sc += s * c;
    cc += c * c;
    s1 += s;
    c1 += c;
    sy += s * v[i];
    cy += c * v[i];
    y1 += v[i];
  }
  // Solve the 3x3 normal system by Cramer's rule.
  const double a11 = ss, a12 = sc, a13 = s1;
  const double a22 = cc, a23 = c1, a33 = n1;
  const double det = a11 * (a22 * a33 - a23 * a23) -
                     a12 * (a12 * a33 - a23 * a13) +
                     a13 * (a12 * a23 - a22 * a13);
  const double da = sy * (a22 * a33 - a23 * a23) -
                    a12 * (cy * a33 - a23 * y1) +
                    a13 * (cy * a23 - a22 * y1);
  const double db = a11 * (cy * a33 - a23 * y1) -
                    sy * (a12 * a33 - a13 * a23) +
                    a13 * (a12 * y1 - cy * a13);
  const double a = da / det, b = db / det;
  return std::sqrt(a * a + b * b);
}

}  // namespace

TEST_CASE("pan downsampling keeps the passband and kills nyquist") {
  const int w = 128, r = 4;
  DegradeConfig cfg;
  cfg.factor = r;

  SUBCASE("low-frequency sinusoid survives") {
    const double cycles = 4;  // well below the new nyquist (16 cycles)
    RasterImage pan(w, w, 1);
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < w; ++x)
        pan.at(0, y, x) =
            0.5 + 0.4 * std::sin(2 * std::numbers::pi * cycles * x / w);
    const RasterImage out = downsample_pan(pan, cfg);
    REQUIRE(out.width == w / r);

    // Columns 5..26 are clear of boundary reflections (radius 20 / r = 5).
    std::vector<double> row;
    for (int x = 5; x <= 26; ++x) row.push_back(out.at(0, 3, x));
    const double omega = 2 * std::numbers::pi * cycles * r / w;
    CHECK(fitted_amplitude(row, omega) / 0.4 >= 0.95);
  }

  SUBCASE("checkerboard at the original nyquist is rejected") {
    RasterImage pan(w, w, 1);
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < w; ++x)
        pan.at(0, y, x) = 0.5 + 0.4 * ((x + y) % 2 == 0 ? 1.0 : -1.0);
    const RasterImage out = downsample_pan(pan, cfg);
    double peak = 0;
    for (int y = 5; y <= 26; ++y)
      for (int x = 5; x <= 26; ++x)
        peak = std::max(peak, std::abs(out.at(0, y, x) - 0.5));
    CHECK(peak / 0.4 <= 0.05);
  }

  SUBCASE("constants pass through exactly") {
    const RasterImage out = downsample_pan(RasterImage(32, 32, 1, 0.3), cfg);
    for (double v : out.samples) CHECK(v == doctest::Approx(0.3).epsilon(1e-10));
  }

  SUBCASE("bad inputs are rejected") {
    CHECK_THROWS_AS(downsample_pan(RasterImage(32, 32, 2, 0.1), cfg),
                    DimensionError);
    CHECK_THROWS_AS(downsample_pan(RasterImage(30, 32, 1, 0.1), cfg),
                    DimensionError);
  }
}

TEST_CASE("upsampling contracts") {
  SUBCASE("nearest replicates blocks") {
    const RasterImage img = oracle::random_raster(5, 4, 2, 21);
    const RasterImage up = upsample(img, 3, UpsampleKernel::Nearest);
    REQUIRE(up.width == 15);
    REQUIRE(up.height == 12);
    for (int b = 0; b < 2; ++b)
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 15; ++x)
          CHECK(up.at(b, y, x) == img.at(b, y / 3, x / 3));
  }

  SUBCASE("bicubic preserves constants") {
    const RasterImage up =
        upsample(RasterImage(6, 6, 1, 0.77), 4, UpsampleKernel::Bicubic);
    for (double v : up.samples) CHECK(v == doctest::Approx(0.77).epsilon(1e-12));
  }

  SUBCASE("bicubic reproduces linear ramps away from borders") {
    const int w = 12, h = 10, r = 4;
    RasterImage img(w, h, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(0, y, x) = 0.3 + 0.1 * x + 0.05 * y;
    const RasterImage up = upsample(img, r, UpsampleKernel::Bicubic);
    REQUIRE(up.width == w * r);
    REQUIRE(up.height == h * r);
    for (int y = r; y <= (h - 3) * r; ++y)
      for (int x = r; x <= (w - 3) * r; ++x) {
        const double want = 0.3 + 0.1 * (static_cast<double>(x) / r) +
                            0.05 * (static_cast<double>(y) / r);
        CHECK(up.at(0, y, x) == doctest::Approx(want).epsilon(1e-6));
      }
  }

  SUBCASE("stack upsampling equals plane-by-plane upsampling") {
    AttentionStack s(6, 5, 3);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& v : s.data) v = uni(rng);

    const AttentionStack up = upsample_stack(s, 2, UpsampleKernel::Bicubic);
    REQUIRE(up.width == 12);
    REQUIRE(up.height == 10);
    REQUIRE(up.maps == 3);
    for (int m = 0; m < 3; ++m) {
      RasterImage plane(6, 5, 1);
      std::copy(s.map_data(m), s.map_data(m) + 30, plane.band_data(0));
      const RasterImage pup = upsample(plane, 2, UpsampleKernel::Bicubic);
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x)
          CHECK(up.at(m, y, x) == doctest::Approx(pup.at(0, y, x)));
    }
  }
}

TEST_CASE("full reduction keeps geometry and reference intact") {
  const RasterImage msi = oracle::random_raster(32, 32, 3, 5);
  const RasterImage pan = oracle::random_raster(128, 128, 1, 6);
  const MsiPanPair pair = make_msi_pan_pair(msi, pan);

  DegradeConfig cfg;
  cfg.factor = 4;
  const WaldReduced red = wald_reduce(pair, cfg);

  CHECK(red.pair.msi.width == 8);
  CHECK(red.pair.msi.height == 8);
  CHECK(red.pair.msi.bands == 3);
  CHECK(red.pair.pan.width == 32);
  CHECK(red.pair.pan.height == 32);
  CHECK(red.pair.factor == 4);

  REQUIRE(red.reference.size() == msi.size());
  for (std::size_t i = 0; i < msi.size(); ++i)
    CHECK(red.reference.samples[i] == msi.samples[i]);
}
