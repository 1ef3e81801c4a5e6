#include "upsam/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "upsam/parallel.hpp"

namespace upsam {

void validate_degrade_config(const DegradeConfig& cfg) {
  if (cfg.factor < 2) throw ConfigError("degrade factor must be >= 2");
  if (cfg.mtf_gains.empty())
    throw ConfigError("at least one MTF gain is required");
  for (double g : cfg.mtf_gains)
    if (!(g > 0.0) || !(g < 1.0))
      throw ConfigError("MTF gain must lie in (0,1), got " +
                        std::to_string(g));
  if (cfg.pan_taps < 3 || cfg.pan_taps % 2 == 0)
    throw ConfigError("pan filter tap count must be odd and >= 3");
}

namespace {

int gaussian_radius(double sigma) {
  return std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
}

// Response of the unit-sum sampled Gaussian at angular frequency omega.
// The kernel is symmetric, so the response is real.
double sampled_gaussian_response(double sigma, double omega) {
  const int radius = gaussian_radius(sigma);
  double sum = 0, re = 0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += v;
    re += v * std::cos(omega * t);
  }
  return re / sum;
}

}  // namespace

std::vector<double> mtf_kernel(double nyquist_gain, int factor) {
  if (!(nyquist_gain > 0.0) || !(nyquist_gain < 1.0))
    throw ConfigError("MTF gain must lie in (0,1)");
  if (factor < 2) throw ConfigError("degrade factor must be >= 2");
  // Continuous model: G(omega) = exp(-sigma^2 omega^2 / 2).  Solving
  // G(pi/factor) == gain (Nyquist of the decimated grid) gives
  //   sigma = factor * sqrt(-2 ln gain) / pi.
  double sigma =
      factor * std::sqrt(-2.0 * std::log(nyquist_gain)) / std::numbers::pi;
  // Once sigma drops toward 1 the sampled taps alias and the realized
  // response drifts off the continuous design; when the drift is visible,
  // refine sigma against the realized response (which decreases in sigma)
  // by bisection.
  const double omega = std::numbers::pi / factor;
  if (std::abs(sampled_gaussian_response(sigma, omega) - nyquist_gain) >
      2.5e-4) {
    double lo = sigma * 0.25, hi = sigma * 4.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (sampled_gaussian_response(mid, omega) > nyquist_gain)
        lo = mid;
      else
        hi = mid;
    }
    sigma = 0.5 * (lo + hi);
  }
  const int radius = gaussian_radius(sigma);
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * t * t / (sigma * sigma));
    k[t + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> sinc_kernel(int factor, int taps) {
  if (factor < 2) throw ConfigError("degrade factor must be >= 2");
  if (taps < 3 || taps % 2 == 0)
    throw ConfigError("sinc tap count must be odd and >= 3");
  const int radius = (taps - 1) / 2;
  std::vector<double> k(taps);
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) {
    // sin(pi t / factor) / (pi t), i.e. cutoff pi/factor, with a Hamming
    // window to tame the truncation ripple.
    double v;
    if (t == 0) {
      v = 1.0 / factor;
    } else {
      v = std::sin(std::numbers::pi * t / factor) / (std::numbers::pi * t);
    }
    const double win =
        0.54 + 0.46 * std::cos(std::numbers::pi * t / radius);
    k[t + radius] = v * win;
    sum += k[t + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

// Symmetric (half-sample) reflection: ...2 1 0 | 0 1 2 ... n-1 | n-1 n-2...
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Separable 2-D convolution of one plane with a centered odd-length 1-D
// kernel, rows then columns, symmetric boundaries.
std::vector<double> convolve_plane(const double* src, int w, int h,
                                   const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  parallel_for(h, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t y = lo; y < hi; ++y) {
      const double* row = src + y * w;
      double* out = tmp.data() + y * w;
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int t = -radius; t <= radius; ++t)
          acc += k[t + radius] * row[reflect(x + t, w)];
        out[x] = acc;
      }
    }
  });
  std::vector<double> dst(static_cast<std::size_t>(w) * h);
  parallel_for(h, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t y = lo; y < hi; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int t = -radius; t <= radius; ++t)
          acc += k[t + radius] *
                 tmp[static_cast<std::size_t>(reflect(static_cast<int>(y) + t,
                                                      h)) *
                         w +
                     x];
        dst[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
  });
  return dst;
}

RasterImage filter_decimate(const RasterImage& img,
                            const std::vector<std::vector<double>>& kernels,
                            int r) {
  if (img.width % r != 0 || img.height % r != 0)
    throw DimensionError("image " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) +
                         " not divisible by factor " + std::to_string(r));
  RasterImage out(img.width / r, img.height / r, img.bands);
  for (int b = 0; b < img.bands; ++b) {
    const auto filtered =
        convolve_plane(img.band_data(b), img.width, img.height, kernels[b]);
    double* dst = out.band_data(b);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        dst[static_cast<std::size_t>(y) * out.width + x] =
            filtered[static_cast<std::size_t>(y) * r * img.width + x * r];
  }
  return out;
}

}  // namespace

RasterImage mtf_degrade_msi(const RasterImage& msi, const DegradeConfig& cfg) {
  validate_degrade_config(cfg);
  if (cfg.mtf_gains.size() != 1 &&
      cfg.mtf_gains.size() != static_cast<std::size_t>(msi.bands))
    throw ConfigError("MTF gain count " +
                      std::to_string(cfg.mtf_gains.size()) +
                      " does not match band count " +
                      std::to_string(msi.bands));
  std::vector<std::vector<double>> kernels(msi.bands);
  for (int b = 0; b < msi.bands; ++b) {
    const double gain =
        cfg.mtf_gains.size() == 1 ? cfg.mtf_gains[0] : cfg.mtf_gains[b];
    kernels[b] = mtf_kernel(gain, cfg.factor);
  }
  return filter_decimate(msi, kernels, cfg.factor);
}

RasterImage downsample_pan(const RasterImage& pan, const DegradeConfig& cfg) {
  validate_degrade_config(cfg);
  if (pan.bands != 1)
    throw DimensionError("pan image must have exactly 1 band");
  const std::vector<std::vector<double>> kernels(
      1, sinc_kernel(cfg.factor, cfg.pan_taps));
  return filter_decimate(pan, kernels, cfg.factor);
}

namespace {

// Catmull-Rom weights (a = -0.5) at fractional offset f for source
// samples at relative positions -1, 0, 1, 2.
void catmull_rom(double f, double w[4]) {
  const double f2 = f * f, f3 = f2 * f;
  w[0] = -0.5 * f3 + f2 - 0.5 * f;
  w[1] = 1.5 * f3 - 2.5 * f2 + 1.0;
  w[2] = -1.5 * f3 + 2.0 * f2 + 0.5 * f;
  w[3] = 0.5 * f3 - 0.5 * f2;
}

std::vector<double> upsample_plane(const double* src, int w, int h, int r,
                                   UpsampleKernel kernel) {
  const int W = w * r, H = h * r;
  std::vector<double> out(static_cast<std::size_t>(W) * H);
  if (kernel == UpsampleKernel::Nearest) {
    parallel_for(H, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t y = lo; y < hi; ++y) {
        const double* row = src + (y / r) * w;
        double* dst = out.data() + y * W;
        for (int x = 0; x < W; ++x) dst[x] = row[x / r];
      }
    });
    return out;
  }

  // Bicubic, separable: rows first into a w*r x h buffer, then columns.
  std::vector<double> tmp(static_cast<std::size_t>(W) * h);
  parallel_for(h, [&](std::int64_t lo, std::int64_t hi) {
    double cw[4];
    for (std::int64_t y = lo; y < hi; ++y) {
      const double* row = src + y * w;
      double* dst = tmp.data() + y * W;
      for (int x = 0; x < W; ++x) {
        const double sx = static_cast<double>(x) / r;
        const int base = static_cast<int>(std::floor(sx));
        catmull_rom(sx - base, cw);
        double acc = 0;
        for (int t = 0; t < 4; ++t)
          acc += cw[t] * row[reflect(base - 1 + t, w)];
        dst[x] = acc;
      }
    }
  });
  parallel_for(W, [&](std::int64_t lo, std::int64_t hi) {
    double cw[4];
    for (std::int64_t x = lo; x < hi; ++x) {
      for (int y = 0; y < H; ++y) {
        const double sy = static_cast<double>(y) / r;
        const int base = static_cast<int>(std::floor(sy));
        catmull_rom(sy - base, cw);
        double acc = 0;
        for (int t = 0; t < 4; ++t)
          acc += cw[t] *
                 tmp[static_cast<std::size_t>(reflect(base - 1 + t, h)) * W +
                     x];
        out[static_cast<std::size_t>(y) * W + x] = acc;
      }
    }
  });
  return out;
}

}  // namespace

RasterImage upsample(const RasterImage& img, int factor,
                     UpsampleKernel kernel) {
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  if (factor == 1) return img;
  RasterImage out(img.width * factor, img.height * factor, img.bands);
  for (int b = 0; b < img.bands; ++b) {
    const auto plane =
        upsample_plane(img.band_data(b), img.width, img.height, factor,
                       kernel);
    std::copy(plane.begin(), plane.end(), out.band_data(b));
  }
  return out;
}

AttentionStack upsample_stack(const AttentionStack& s, int factor,
                              UpsampleKernel kernel) {
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  if (factor == 1) return s;
  AttentionStack out(s.width * factor, s.height * factor, s.maps);
  for (int m = 0; m < s.maps; ++m) {
    const auto plane =
        upsample_plane(s.map_data(m), s.width, s.height, factor, kernel);
    std::copy(plane.begin(), plane.end(), out.map_data(m));
  }
  return out;
}

WaldReduced wald_reduce(const MsiPanPair& pair, const DegradeConfig& cfg) {
  WaldReduced r;
  r.pair.msi = mtf_degrade_msi(pair.msi, cfg);
  r.pair.pan = downsample_pan(pair.pan, cfg);
  r.pair.factor = pair.factor;
  r.reference = pair.msi;
  // The reduced pair must itself be a valid acquisition.
  if (r.pair.pan.width != r.pair.msi.width * pair.factor ||
      r.pair.pan.height != r.pair.msi.height * pair.factor)
    throw DimensionError(
        "reduced pair no longer satisfies the pan/msi size relation");
  return r;
}

}  // namespace upsam
