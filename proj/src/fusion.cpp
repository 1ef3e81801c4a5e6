#include "upsam/fusion.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace upsam {

namespace {

constexpr double kTikhonov = 1e-8;
constexpr std::size_t kMinRegionPixels = 8;
constexpr double kVarFloor = 1e-14;

// Gaussian elimination with partial pivoting; A is n x n row-major.
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b,
                                 int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
    if (A[piv * n + col] == 0)
      throw DomainError("singular system in regression solve");
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(A[piv * n + c], A[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    const double d = A[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r * n + col] / d;
      if (f == 0) continue;
      for (int c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= A[r * n + c] * x[c];
    x[r] = acc / A[r * n + r];
  }
  return x;
}

}  // namespace

RegressionCoeffs fit_pan_regression(const RasterImage& msi_lr,
                                    const RasterImage& pan_lr) {
  if (pan_lr.bands != 1)
    throw DimensionError("regression target must be single-band");
  if (msi_lr.width != pan_lr.width || msi_lr.height != pan_lr.height)
    throw DimensionError("regression inputs have different dimensions");
  const int L = msi_lr.bands;
  const int n = L + 1;  // bands + intercept
  const std::size_t npix = msi_lr.pixels();
  if (npix < static_cast<std::size_t>(n))
    throw DomainError("fewer pixels than regression coefficients");

  // Degenerate design: every band constant leaves only the intercept.
  bool any_varying = false;
  for (int b = 0; b < L && !any_varying; ++b) {
    const double* col = msi_lr.band_data(b);
    for (std::size_t i = 1; i < npix; ++i)
      if (col[i] != col[0]) {
        any_varying = true;
        break;
      }
  }
  if (!any_varying)
    throw DomainError("all regressor bands are constant; fit is undefined");

  // Normal equations X^T X beta = X^T y with X = [bands | 1].
  std::vector<double> xtx(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> xty(n, 0.0);
  const double* y = pan_lr.band_data(0);
  for (std::size_t i = 0; i < npix; ++i) {
    for (int r = 0; r < n; ++r) {
      const double xr = r < L ? msi_lr.band_data(r)[i] : 1.0;
      xty[r] += xr * y[i];
      for (int c = r; c < n; ++c) {
        const double xc = c < L ? msi_lr.band_data(c)[i] : 1.0;
        xtx[r * n + c] += xr * xc;
      }
    }
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < r; ++c) xtx[r * n + c] = xtx[c * n + r];

  std::vector<double> damped = xtx;
  for (int r = 0; r < n; ++r) damped[r * n + r] += kTikhonov;
  std::vector<double> beta = solve_linear(damped, xty, n);

  // One iterative-refinement step against the undamped system recovers
  // the bias the damping introduced (exact-span targets then come back
  // with ~1e-12 residuals instead of ~1e-8).
  std::vector<double> resid(n);
  for (int r = 0; r < n; ++r) {
    double acc = xty[r];
    for (int c = 0; c < n; ++c) acc -= xtx[r * n + c] * beta[c];
    resid[r] = acc;
  }
  const std::vector<double> corr = solve_linear(damped, resid, n);
  for (int r = 0; r < n; ++r) beta[r] += corr[r];

  RegressionCoeffs out;
  out.alpha.assign(beta.begin(), beta.begin() + L);
  out.intercept = beta[L];
  for (double a : out.alpha)
    if (!std::isfinite(a)) throw NumericError("non-finite regression weight");
  if (!std::isfinite(out.intercept))
    throw NumericError("non-finite regression intercept");
  return out;
}

RasterImage synth_low_pan(const RegressionCoeffs& coeffs,
                          const RasterImage& msi_hat_up) {
  if (static_cast<int>(coeffs.alpha.size()) != msi_hat_up.bands)
    throw DimensionError("coefficient count " +
                         std::to_string(coeffs.alpha.size()) +
                         " != band count " +
                         std::to_string(msi_hat_up.bands));
  RasterImage out(msi_hat_up.width, msi_hat_up.height, 1);
  const std::size_t npix = out.pixels();
  for (std::size_t i = 0; i < npix; ++i) {
    double v = coeffs.intercept;
    for (int k = 0; k < msi_hat_up.bands; ++k)
      v += coeffs.alpha[k] * msi_hat_up.band_data(k)[i];
    out.samples[i] = v;
  }
  return out;
}

RasterImage extract_detail(const RasterImage& pan,
                           const RasterImage& pan_low_hat) {
  if (pan.width != pan_low_hat.width || pan.height != pan_low_hat.height ||
      pan.bands != 1 || pan_low_hat.bands != 1)
    throw DimensionError("detail inputs must be equally sized single-band");
  RasterImage out(pan.width, pan.height, 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.samples[i] = pan.samples[i] - pan_low_hat.samples[i];
  return out;
}

Msim compute_msim(const AttentionStack& s_up) {
  Msim m(s_up.width, s_up.height);
  const std::size_t npix = s_up.pixels();
  for (std::size_t i = 0; i < npix; ++i) {
    int best = 0;
    double bv = s_up.data[i];
    for (int j = 1; j < s_up.maps; ++j) {
      const double v = s_up.data[static_cast<std::size_t>(j) * npix + i];
      if (v > bv) {
        bv = v;
        best = j;
      }
    }
    m.values[i] = best;
  }
  return m;
}

namespace {

// Shared gain estimator; `maps` are equally sized planes co-registered
// with pan_low_hat.  Population (divide-by-n) two-pass moments.
GainTable gains_impl(const std::vector<const double*>& maps, int width,
                     int height, const RasterImage& pan_low_hat,
                     const Msim* msim) {
  if (pan_low_hat.width != width || pan_low_hat.height != height ||
      pan_low_hat.bands != 1)
    throw DimensionError("gain inputs have inconsistent dimensions");
  const std::size_t npix = static_cast<std::size_t>(width) * height;
  const int nmaps = static_cast<int>(maps.size());
  const double* p = pan_low_hat.band_data(0);

  int regions = 1;
  if (msim) {
    if (msim->width != width || msim->height != height)
      throw DimensionError("msim dimensions do not match the maps");
    for (int v : msim->values)
      if (v < 0)
        throw DomainError("negative msim index");
      else
        regions = std::max(regions, v + 1);
    regions = std::max(regions, nmaps);
  }

  GainTable table;
  table.mode = msim ? GainTable::Mode::Variant : GainTable::Mode::Global;
  table.maps = nmaps;
  table.regions = regions;
  table.g.assign(static_cast<std::size_t>(nmaps) * regions, 0.0);
  table.degenerate.assign(regions, 0);

  std::vector<std::size_t> count(regions, 0);
  std::vector<double> pmean(regions, 0.0);
  for (std::size_t i = 0; i < npix; ++i) {
    const int t = msim ? msim->values[i] : 0;
    ++count[t];
    pmean[t] += p[i];
  }
  std::vector<double> pvar(regions, 0.0);
  for (int t = 0; t < regions; ++t)
    if (count[t]) pmean[t] /= static_cast<double>(count[t]);
  for (std::size_t i = 0; i < npix; ++i) {
    const int t = msim ? msim->values[i] : 0;
    const double d = p[i] - pmean[t];
    pvar[t] += d * d;
  }
  for (int t = 0; t < regions; ++t)
    if (count[t]) pvar[t] /= static_cast<double>(count[t]);

  if (!msim && pvar[0] <= 0)
    throw DomainError(
        "synthesized low-resolution pan has zero variance; global gains "
        "are undefined");

  std::vector<double> mmean(nmaps);
  for (int t = 0; t < regions; ++t) {
    if (count[t] < kMinRegionPixels || pvar[t] <= kVarFloor) {
      table.degenerate[t] = 1;  // gains stay 0
      continue;
    }
    std::fill(mmean.begin(), mmean.end(), 0.0);
    for (std::size_t i = 0; i < npix; ++i) {
      if (msim && msim->values[i] != t) continue;
      for (int mIdx = 0; mIdx < nmaps; ++mIdx) mmean[mIdx] += maps[mIdx][i];
    }
    for (int mIdx = 0; mIdx < nmaps; ++mIdx)
      mmean[mIdx] /= static_cast<double>(count[t]);
    for (int mIdx = 0; mIdx < nmaps; ++mIdx) {
      double cov = 0;
      for (std::size_t i = 0; i < npix; ++i) {
        if (msim && msim->values[i] != t) continue;
        cov += (maps[mIdx][i] - mmean[mIdx]) * (p[i] - pmean[t]);
      }
      cov /= static_cast<double>(count[t]);
      table.at(mIdx, t) = cov / pvar[t];
    }
  }
  return table;
}

std::vector<const double*> stack_planes(const AttentionStack& s) {
  std::vector<const double*> planes(s.maps);
  for (int m = 0; m < s.maps; ++m) planes[m] = s.map_data(m);
  return planes;
}

std::vector<const double*> band_planes(const RasterImage& img) {
  std::vector<const double*> planes(img.bands);
  for (int b = 0; b < img.bands; ++b) planes[b] = img.band_data(b);
  return planes;
}

}  // namespace

GainTable global_gains(const AttentionStack& s_up,
                       const RasterImage& pan_low_hat) {
  return gains_impl(stack_planes(s_up), s_up.width, s_up.height, pan_low_hat,
                    nullptr);
}

GainTable variant_gains(const AttentionStack& s_up,
                        const RasterImage& pan_low_hat, const Msim& msim) {
  return gains_impl(stack_planes(s_up), s_up.width, s_up.height, pan_low_hat,
                    &msim);
}

GainTable global_gains(const RasterImage& bands_up,
                       const RasterImage& pan_low_hat) {
  return gains_impl(band_planes(bands_up), bands_up.width, bands_up.height,
                    pan_low_hat, nullptr);
}

GainTable variant_gains(const RasterImage& bands_up,
                        const RasterImage& pan_low_hat, const Msim& msim) {
  return gains_impl(band_planes(bands_up), bands_up.width, bands_up.height,
                    pan_low_hat, &msim);
}

namespace {

void check_gain_table(const GainTable& gains, int nmaps, const Msim* msim) {
  if (gains.maps != nmaps)
    throw DimensionError("gain table covers " + std::to_string(gains.maps) +
                         " maps, need " + std::to_string(nmaps));
  if (gains.mode == GainTable::Mode::Variant && !msim)
    throw DomainError("variant gain table requires an msim");
  if (msim && gains.mode == GainTable::Mode::Variant)
    for (int v : msim->values)
      if (v < 0 || v >= gains.regions)
        throw DomainError("msim index " + std::to_string(v) +
                          " has no gain entry");
}

}  // namespace

RasterImage inject_and_reconstruct(const TrainedModel& model,
                                   const AttentionStack& s_up,
                                   const GainTable& gains,
                                   const RasterImage& detail,
                                   const Msim* msim) {
  if (detail.width != s_up.width || detail.height != s_up.height ||
      detail.bands != 1)
    throw DimensionError("detail must be single-band at the stack size");
  check_gain_table(gains, s_up.maps, msim);

  AttentionStack injected = s_up;
  const std::size_t npix = s_up.pixels();
  for (int m = 0; m < s_up.maps; ++m) {
    double* plane = injected.map_data(m);
    for (std::size_t i = 0; i < npix; ++i) {
      const int t =
          gains.mode == GainTable::Mode::Variant ? msim->values[i] : 0;
      plane[i] += gains.at(m, t) * detail.samples[i];
    }
  }
  return decode_image(model, injected);
}

RasterImage inject_bands(const RasterImage& msi_hat_up,
                         const GainTable& gains, const RasterImage& detail,
                         const Msim* msim) {
  if (detail.width != msi_hat_up.width || detail.height != msi_hat_up.height ||
      detail.bands != 1)
    throw DimensionError("detail must be single-band at the image size");
  check_gain_table(gains, msi_hat_up.bands, msim);

  RasterImage out = msi_hat_up;
  const std::size_t npix = out.pixels();
  for (int b = 0; b < out.bands; ++b) {
    double* plane = out.band_data(b);
    for (std::size_t i = 0; i < npix; ++i) {
      const int t =
          gains.mode == GainTable::Mode::Variant ? msim->values[i] : 0;
      plane[i] += gains.at(b, t) * detail.samples[i];
    }
  }
  return out;
}

namespace {

RasterImage nearest_decimate(const RasterImage& img, int r) {
  if (img.width % r != 0 || img.height % r != 0)
    throw DimensionError("image dimensions not divisible by factor");
  RasterImage out(img.width / r, img.height / r, img.bands);
  for (int b = 0; b < img.bands; ++b) {
    const double* src = img.band_data(b);
    double* dst = out.band_data(b);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        dst[static_cast<std::size_t>(y) * out.width + x] =
            src[static_cast<std::size_t>(y) * r * img.width + x * r];
  }
  return out;
}

class StageClock {
 public:
  explicit StageClock(RunReport* report) : report_(report) {}
  template <typename F>
  auto run(int stage, const char* name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto result = f();
      record(name, t0);
      return result;
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      throw PipelineError("stage " + std::to_string(stage) + " (" + name +
                              "): " + e.what(),
                          stage, name);
    }
  }

 private:
  void record(const char* name,
              std::chrono::steady_clock::time_point t0) {
    if (!report_) return;
    const auto dt = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - t0);
    report_->timings.push_back({name, dt.count()});
  }
  RunReport* report_;
};

}  // namespace

RasterImage pansharpen(const MsiPanPair& pair, const FusionConfig& cfg,
                       RunReport* report) {
  if (pair.factor < 1 || pair.msi.bands < 1 || pair.pan.bands != 1 ||
      pair.pan.width != pair.msi.width * pair.factor ||
      pair.pan.height != pair.msi.height * pair.factor)
    throw DimensionError("invalid msi/pan pair");
  const int r = pair.factor;

  NetworkConfig net = cfg.net;
  if (net.L == 0) net.L = pair.msi.bands;
  if (net.decoder.empty()) net.decoder = {10, net.L};
  net.seed = cfg.seed;
  if (net.L != pair.msi.bands)
    throw ConfigError("network band count " + std::to_string(net.L) +
                      " != msi bands " + std::to_string(pair.msi.bands));

  StageClock clock(report);

  // 1. Attention representation extraction.
  TrainedModel model = clock.run(1, "attention", [&] {
    TrainedModel m = train(pair.msi, net);
    if (report) report->loss_history = m.loss_history;
    return m;
  });
  AttentionStack s =
      clock.run(1, "encode", [&] { return encode_image(model, pair.msi); });

  // 2. Low-resolution PAN synthesis.
  struct Stage2 {
    RegressionCoeffs coeffs;
    RasterImage pan_low_hat;
  };
  Stage2 s2 = clock.run(2, "pan-synthesis", [&] {
    const RasterImage pan_lr = nearest_decimate(pair.pan, r);
    Stage2 out;
    out.coeffs = fit_pan_regression(pair.msi, pan_lr);
    const RasterImage msi_hat = decode_image(model, s);
    const RasterImage msi_hat_up = upsample(msi_hat, r, cfg.kernel);
    out.pan_low_hat = synth_low_pan(out.coeffs, msi_hat_up);
    if (report) report->coeffs = out.coeffs;
    return out;
  });

  // 3. Detail extraction.
  RasterImage detail = clock.run(
      3, "detail", [&] { return extract_detail(pair.pan, s2.pan_low_hat); });

  // 4. MSIM and injection gains.
  struct Stage4 {
    AttentionStack s_up;
    Msim msim;
    GainTable gains;
    RasterImage msi_hat_up;  // band-domain carrier, empty in maps mode
  };
  Stage4 s4 = clock.run(4, "gains", [&] {
    Stage4 out;
    out.s_up = upsample_stack(s, r, cfg.kernel);
    out.msim = compute_msim(out.s_up);
    if (cfg.domain == InjectDomain::Bands) {
      const RasterImage msi_hat = decode_image(model, s);
      out.msi_hat_up = upsample(msi_hat, r, cfg.kernel);
    }
    if (cfg.injection == InjectionMode::Global) {
      out.gains = cfg.domain == InjectDomain::Maps
                      ? global_gains(out.s_up, s2.pan_low_hat)
                      : global_gains(out.msi_hat_up, s2.pan_low_hat);
    } else {
      out.gains = cfg.domain == InjectDomain::Maps
                      ? variant_gains(out.s_up, s2.pan_low_hat, out.msim)
                      : variant_gains(out.msi_hat_up, s2.pan_low_hat,
                                      out.msim);
    }
    if (report) {
      report->gains = out.gains;
      for (int t = 0; t < out.gains.regions; ++t)
        if (out.gains.degenerate[t]) report->degenerate_regions.push_back(t);
    }
    return out;
  });

  // 5. Reconstruction.
  const Msim* msim_ptr =
      cfg.injection == InjectionMode::Msim ? &s4.msim : nullptr;
  return clock.run(5, "reconstruction", [&] {
    return cfg.domain == InjectDomain::Maps
               ? inject_and_reconstruct(model, s4.s_up, s4.gains, detail,
                                        msim_ptr)
               : inject_bands(s4.msi_hat_up, s4.gains, detail, msim_ptr);
  });
}

}  // namespace upsam
