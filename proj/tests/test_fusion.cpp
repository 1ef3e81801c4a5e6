#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "upsam/errors.hpp"
#include "upsam/fusion.hpp"
#include "upsam/protocol.hpp"
#include "upsam/synth.hpp"

using namespace upsam;

namespace {

AttentionStack random_stack(int w, int h, int maps, std::uint64_t seed) {
  AttentionStack s(w, h, maps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& v : s.data) v = uni(rng);
  return s;
}

}  // namespace

TEST_CASE("pan regression recovers exact linear combinations") {
  const RasterImage msi = oracle::random_raster(12, 10, 3, 2);
  RasterImage pan(12, 10, 1);
  for (std::size_t i = 0; i < pan.pixels(); ++i)
    pan.samples[i] = 0.3 * msi.band_data(0)[i] + 0.7 * msi.band_data(1)[i] +
                     0.1;

  const RegressionCoeffs rc = fit_pan_regression(msi, pan);
  REQUIRE(rc.alpha.size() == 3);
  CHECK(rc.alpha[0] == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(rc.alpha[1] == doctest::Approx(0.7).epsilon(1e-8));
  CHECK(rc.alpha[2] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(rc.intercept == doctest::Approx(0.1).epsilon(1e-8));

  // Residual beats 1e-10 everywhere for exact-span targets.
  const RasterImage fit = synth_low_pan(rc, msi);
  for (std::size_t i = 0; i < pan.pixels(); ++i)
    CHECK(std::abs(fit.samples[i] - pan.samples[i]) < 1e-10);
}

TEST_CASE("pan regression reproduces a single band") {
  const RasterImage msi = oracle::random_raster(8, 8, 4, 3);
  RasterImage pan(8, 8, 1);
  std::copy(msi.band_data(0), msi.band_data(0) + 64, pan.samples.begin());

  const RegressionCoeffs rc = fit_pan_regression(msi, pan);
  CHECK(rc.alpha[0] == doctest::Approx(1.0).epsilon(1e-8));
  for (int k = 1; k < 4; ++k)
    CHECK(rc.alpha[k] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(rc.intercept == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("regression residual is orthogonal to the regressors") {
  const RasterImage msi = oracle::random_raster(16, 16, 5, 4);
  const RasterImage pan = oracle::random_raster(16, 16, 1, 5);
  const RegressionCoeffs rc = fit_pan_regression(msi, pan);
  const RasterImage fit = synth_low_pan(rc, msi);

  const std::size_t n = pan.pixels();
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i)
    resid[i] = pan.samples[i] - fit.samples[i];

  for (int k = 0; k < 5; ++k) {
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += resid[i] * msi.band_data(k)[i];
    CHECK(std::abs(dot / n) < 1e-8);
  }
  double sum = 0;
  for (double r : resid) sum += r;
  CHECK(std::abs(sum / n) < 1e-8);  // intercept column
}

TEST_CASE("pan regression input validation") {
  const RasterImage msi = oracle::random_raster(8, 8, 3, 6);
  CHECK_THROWS_AS(fit_pan_regression(msi, oracle::random_raster(8, 8, 2, 7)),
                  DimensionError);
  CHECK_THROWS_AS(fit_pan_regression(msi, oracle::random_raster(4, 8, 1, 7)),
                  DimensionError);
  CHECK_THROWS_AS(
      fit_pan_regression(RasterImage(8, 8, 3, 0.4),
                         oracle::random_raster(8, 8, 1, 7)),
      DomainError);  // all bands constant
  CHECK_THROWS_AS(
      fit_pan_regression(oracle::random_raster(2, 1, 3, 8),
                         oracle::random_raster(2, 1, 1, 9)),
      DomainError);  // fewer pixels than unknowns
}

TEST_CASE("low-resolution pan synthesis is a pixelwise dot product") {
  const RasterImage msi = oracle::random_raster(7, 5, 3, 11);

  RegressionCoeffs first;
  first.alpha = {1.0, 0.0, 0.0};
  first.intercept = 0.0;
  const RasterImage b0 = synth_low_pan(first, msi);
  for (std::size_t i = 0; i < b0.pixels(); ++i)
    CHECK(b0.samples[i] == msi.band_data(0)[i]);

  RegressionCoeffs flat;
  flat.alpha = {0.0, 0.0, 0.0};
  flat.intercept = 0.5;
  const RasterImage c = synth_low_pan(flat, msi);
  for (double v : c.samples) CHECK(v == 0.5);

  RegressionCoeffs rnd;
  rnd.alpha = {0.2, -0.4, 1.1};
  rnd.intercept = 0.05;
  const RasterImage out = synth_low_pan(rnd, msi);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      double v = rnd.intercept;
      for (int k = 0; k < 3; ++k) v += rnd.alpha[k] * msi.at(k, y, x);
      CHECK(out.at(0, y, x) == doctest::Approx(v).epsilon(1e-12));
    }

  RegressionCoeffs wrong;
  wrong.alpha = {1.0, 2.0};
  CHECK_THROWS_AS(synth_low_pan(wrong, msi), DimensionError);
}

TEST_CASE("detail extraction") {
  RasterImage pan(2, 2, 1);
  pan.at(0, 0, 0) = 1.0;
  pan.at(0, 0, 1) = 0.0;
  pan.at(0, 1, 0) = 0.0;
  pan.at(0, 1, 1) = 1.0;
  const RasterImage low(2, 2, 1, 0.5);
  const RasterImage d = extract_detail(pan, low);
  CHECK(d.at(0, 0, 0) == doctest::Approx(0.5));
  CHECK(d.at(0, 0, 1) == doctest::Approx(-0.5));
  CHECK(d.at(0, 1, 0) == doctest::Approx(-0.5));
  CHECK(d.at(0, 1, 1) == doctest::Approx(0.5));

  const RasterImage z = extract_detail(pan, pan);
  for (double v : z.samples) CHECK(v == 0.0);

  CHECK_THROWS_AS(extract_detail(pan, RasterImage(3, 2, 1, 0.1)),
                  DimensionError);
}

TEST_CASE("argmax index map with lowest-index ties") {
  AttentionStack s(2, 1, 3);
  // Pixel 0: clear winner map 2.  Pixel 1: exact tie between maps 0 and 1.
  s.at(0, 0, 0) = 0.1;
  s.at(1, 0, 0) = 0.2;
  s.at(2, 0, 0) = 0.7;
  s.at(0, 0, 1) = 0.5;
  s.at(1, 0, 1) = 0.5;
  s.at(2, 0, 1) = 0.0;
  const Msim m = compute_msim(s);
  CHECK(m.at(0, 0) == 2);
  CHECK(m.at(0, 1) == 0);

  // Scaling every vector by a positive constant leaves the argmax alone.
  AttentionStack scaled = s;
  for (auto& v : scaled.data) v *= 3.7;
  const Msim m2 = compute_msim(scaled);
  CHECK(m2.values == m.values);
}

TEST_CASE("global injection gains") {
  const int w = 10, h = 8;
  RasterImage p(w, h, 1);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& v : p.samples) v = uni(rng);

  SUBCASE("affine map recovers its slope; constant map gets zero") {
    AttentionStack s(w, h, 2);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
      s.data[i] = 2.0 * p.samples[i] + 5.0;  // map 0
      s.data[p.pixels() + i] = 0.42;         // map 1, constant
    }
    const GainTable g = global_gains(s, p);
    CHECK(g.mode == GainTable::Mode::Global);
    REQUIRE(g.maps == 2);
    REQUIRE(g.regions == 1);
    CHECK(g.at(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(g.at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("random maps match the two-pass covariance oracle") {
    const AttentionStack s = random_stack(w, h, 3, 33);
    const GainTable g = global_gains(s, p);
    std::vector<std::size_t> all(p.pixels());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const std::vector<double> pv(p.samples.begin(), p.samples.end());
    const double var = oracle::subset_cov(pv, pv, all);
    for (int m = 0; m < 3; ++m) {
      const std::vector<double> mv(s.map_data(m), s.map_data(m) + p.pixels());
      CHECK(g.at(m, 0) ==
            doctest::Approx(oracle::subset_cov(mv, pv, all) / var)
                .epsilon(1e-10));
    }
  }

  SUBCASE("zero-variance synthesized pan is an error") {
    const AttentionStack s = random_stack(w, h, 2, 34);
    // Dyadic fill keeps the two-pass mean exact, so the variance is exactly
    // zero instead of accumulation dust.
    CHECK_THROWS_AS(global_gains(s, RasterImage(w, h, 1, 0.25)), DomainError);
  }
}

TEST_CASE("spatially variant injection gains") {
  const int w = 12, h = 12;
  RasterImage p(w, h, 1);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& v : p.samples) v = uni(rng);

  SUBCASE("constant region map reduces to the global gains") {
    const AttentionStack s = random_stack(w, h, 4, 43);
    const Msim zeros(w, h, 0);
    const GainTable variant = variant_gains(s, p, zeros);
    const GainTable global = global_gains(s, p);
    CHECK(variant.mode == GainTable::Mode::Variant);
    REQUIRE(variant.regions >= 1);
    for (int m = 0; m < 4; ++m)
      CHECK(variant.at(m, 0) ==
            doctest::Approx(global.at(m, 0)).epsilon(1e-10));
  }

  SUBCASE("planted per-region slopes are recovered") {
    // Left half: map0 = 3p + 1.  Right half: map0 = -0.5p + 2.
    AttentionStack s(w, h, 2);
    Msim regions(w, h, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool left = x < w / 2;
        regions.at(y, x) = left ? 0 : 1;
        s.at(0, y, x) = left ? 3.0 * p.at(0, y, x) + 1.0
                             : -0.5 * p.at(0, y, x) + 2.0;
        s.at(1, y, x) = 0.77;
      }
    const GainTable g = variant_gains(s, p, regions);
    REQUIRE(g.regions >= 2);
    CHECK(g.at(0, 0) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(g.at(0, 1) == doctest::Approx(-0.5).epsilon(1e-8));
    CHECK(g.at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g.degenerate.size() == static_cast<std::size_t>(g.regions));
    CHECK(g.degenerate[0] == 0);
    CHECK(g.degenerate[1] == 0);
  }

  SUBCASE("two-region fixture matches the brute-force oracle") {
    const AttentionStack s = random_stack(w, h, 3, 47);
    Msim regions(w, h, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) regions.at(y, x) = (x + y) % 2;
    const GainTable g = variant_gains(s, p, regions);

    const std::vector<double> pv(p.samples.begin(), p.samples.end());
    for (int t = 0; t < 2; ++t) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < p.pixels(); ++i)
        if (regions.values[i] == t) idx.push_back(i);
      const double var = oracle::subset_cov(pv, pv, idx);
      for (int m = 0; m < 3; ++m) {
        const std::vector<double> mv(s.map_data(m),
                                     s.map_data(m) + p.pixels());
        CHECK(g.at(m, t) ==
              doctest::Approx(oracle::subset_cov(mv, pv, idx) / var)
                  .epsilon(1e-10));
      }
    }
  }

  SUBCASE("tiny and flat regions are flagged and silenced") {
    const AttentionStack s = random_stack(w, h, 2, 53);
    Msim regions(w, h, 0);
    // Region 1 holds only 3 pixels: below the minimum population.
    regions.at(0, 0) = 1;
    regions.at(0, 1) = 1;
    regions.at(0, 2) = 1;
    const GainTable g = variant_gains(s, p, regions);
    REQUIRE(g.regions >= 2);
    CHECK(g.degenerate[1] == 1);
    for (int m = 0; m < 2; ++m) CHECK(g.at(m, 1) == 0.0);

    // A large region with a flat synthesized pan is also degenerate.
    RasterImage p2 = p;
    for (int y = 6; y < h; ++y)
      for (int x = 0; x < w; ++x) p2.at(0, y, x) = 0.25;
    Msim regions2(w, h, 0);
    for (int y = 6; y < h; ++y)
      for (int x = 0; x < w; ++x) regions2.at(y, x) = 1;
    const GainTable g2 = variant_gains(s, p2, regions2);
    CHECK(g2.degenerate[1] == 1);
    for (int m = 0; m < 2; ++m) CHECK(g2.at(m, 1) == 0.0);
  }
}

namespace {

// A tiny trained model shared by the injection tests.
struct InjectFixture {
  TrainedModel model;
  AttentionStack s_up;
  RasterImage detail;
  Msim msim;
};

InjectFixture make_inject_fixture() {
  const ToyFixture toy = gen_toy(3);
  RasterImage crop(12, 12, toy.msi.bands);
  for (int b = 0; b < crop.bands; ++b)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) crop.at(b, y, x) = toy.msi.at(b, y, x);

  NetworkConfig cfg = NetworkConfig::defaults(crop.bands);
  cfg.c2 = 4;
  cfg.decoder = {10, crop.bands};
  cfg.iterations = 25;
  cfg.batch = 32;
  cfg.seed = 5;

  InjectFixture f;
  f.model = train(crop, cfg);
  const AttentionStack s = encode_image(f.model, crop);
  f.s_up = upsample_stack(s, 2, UpsampleKernel::Bicubic);
  f.detail = oracle::random_raster(24, 24, 1, 61, -0.2, 0.2);
  f.msim = compute_msim(f.s_up);
  return f;
}

}  // namespace

TEST_CASE("detail injection and reconstruction") {
  const InjectFixture f = make_inject_fixture();
  const RasterImage base = decode_image(f.model, f.s_up);

  GainTable gains = variant_gains(f.s_up, oracle::random_raster(24, 24, 1, 67),
                                  f.msim);

  SUBCASE("zero detail is a fixpoint") {
    const RasterImage zero(24, 24, 1, 0.0);
    const RasterImage out =
        inject_and_reconstruct(f.model, f.s_up, gains, zero, &f.msim);
    REQUIRE(out.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      CHECK(out.samples[i] == doctest::Approx(base.samples[i]).epsilon(1e-12));
  }

  SUBCASE("zero gains ignore any detail") {
    GainTable silent = gains;
    for (auto& v : silent.g) v = 0.0;
    const RasterImage out =
        inject_and_reconstruct(f.model, f.s_up, silent, f.detail, &f.msim);
    for (std::size_t i = 0; i < base.size(); ++i)
      CHECK(out.samples[i] == doctest::Approx(base.samples[i]).epsilon(1e-12));
  }

  SUBCASE("doubling the detail doubles the correction") {
    const RasterImage once =
        inject_and_reconstruct(f.model, f.s_up, gains, f.detail, &f.msim);
    RasterImage twice_d = f.detail;
    for (auto& v : twice_d.samples) v *= 2.0;
    const RasterImage twice =
        inject_and_reconstruct(f.model, f.s_up, gains, twice_d, &f.msim);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double d1 = once.samples[i] - base.samples[i];
      const double d2 = twice.samples[i] - base.samples[i];
      CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-10));
    }
  }

  SUBCASE("variant gains demand an index map") {
    CHECK_THROWS_AS(
        inject_and_reconstruct(f.model, f.s_up, gains, f.detail, nullptr),
        DomainError);
  }

  SUBCASE("out-of-range region indices are refused") {
    Msim broken = f.msim;
    broken.values[5] = gains.regions + 3;
    CHECK_THROWS_AS(
        inject_and_reconstruct(f.model, f.s_up, gains, f.detail, &broken),
        DomainError);
  }
}

TEST_CASE("band-domain injection adds gained detail per band") {
  const RasterImage bands = oracle::random_raster(6, 6, 3, 71);
  const RasterImage detail = oracle::random_raster(6, 6, 1, 72, -0.5, 0.5);

  GainTable g;
  g.mode = GainTable::Mode::Global;
  g.maps = 3;
  g.regions = 1;
  g.g = {0.5, -1.0, 2.0};
  g.degenerate = {0};

  const RasterImage out = inject_bands(bands, g, detail, nullptr);
  for (int k = 0; k < 3; ++k)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        CHECK(out.at(k, y, x) ==
              doctest::Approx(bands.at(k, y, x) +
                              g.g[k] * detail.at(0, y, x))
                  .epsilon(1e-12));
}

TEST_CASE("full pipeline on a small synthetic scene") {
  const SyntheticPair sp = gen_synthetic_pair(toy_signatures(), 32, 4, 5);

  FusionConfig cfg;
  cfg.seed = 1;
  cfg.net.iterations = 150;
  cfg.net.batch = 64;

  RunReport report;
  const RasterImage fused = pansharpen(sp.pair, cfg, &report);

  CHECK(fused.width == 32);
  CHECK(fused.height == 32);
  CHECK(fused.bands == 8);
  for (double v : fused.samples) CHECK(std::isfinite(v));

  CHECK(!report.loss_history.empty());
  CHECK(report.coeffs.alpha.size() == 8);
  CHECK(report.gains.maps == 10);
  CHECK(report.gains.mode == GainTable::Mode::Variant);
  REQUIRE(report.timings.size() >= 5);
  for (const auto& t : report.timings) CHECK(t.ms >= 0.0);

  SUBCASE("global injection and band domain also run") {
    FusionConfig alt = cfg;
    alt.net.iterations = 40;
    alt.injection = InjectionMode::Global;
    alt.domain = InjectDomain::Bands;
    RunReport r2;
    const RasterImage out = pansharpen(sp.pair, alt, &r2);
    CHECK(out.bands == 8);
    CHECK(r2.gains.mode == GainTable::Mode::Global);
    for (double v : out.samples) CHECK(std::isfinite(v));
  }
}

TEST_CASE("pipeline failures carry their stage") {
  // A constant MSI trains fine but cannot support the pan regression.
  RasterImage msi(8, 8, 3, 0.4);
  RasterImage pan(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) pan.at(0, y, x) = (x + y) / 64.0;
  const MsiPanPair pair = make_msi_pan_pair(msi, pan);

  FusionConfig cfg;
  cfg.net.iterations = 1;
  cfg.net.batch = 16;

  try {
    pansharpen(pair, cfg);
    FAIL("expected a pipeline error");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == 2);
    CHECK(e.stage_name() == "pan-synthesis");
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
  }
}
