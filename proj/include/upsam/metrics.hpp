#pragma once

#include <optional>

#include "upsam/raster.hpp"

namespace upsam {

// All reduced-resolution metrics assume data normalized to peak 1.

// Mean over bands of 10*log10(1/MSE_k), each band capped at 99 dB (the
// finite stand-in for a perfect match).
double psnr(const RasterImage& ref, const RasterImage& test);

// Mean spectral angle in degrees; pixels where either spectrum has zero
// norm are skipped.
double sam(const RasterImage& ref, const RasterImage& test);

// (100/r) * sqrt(mean_k(MSE_k / mean_k(ref)^2)).
double ergas(const RasterImage& ref, const RasterImage& test, int factor);

// Universal image quality index on single-band images, averaged over
// block x block windows placed every `shift` pixels (correlation *
// luminance * contrast; degenerate blocks: constant-vs-constant pairs
// score 1 when identical and 0 otherwise, zero-mean pairs keep the
// luminance factor at 1).
double uiqi(const RasterImage& a, const RasterImage& b, int block = 32,
            int shift = 32);

// Hypercomplex generalization: spectra are zero-padded to the next power
// of two and treated as Cayley-Dickson numbers; the covariance and mean
// products keep their hypercomplex modulus (signed by the real part, so
// the 1-band case degenerates exactly to uiqi).
double q2n(const RasterImage& ref, const RasterImage& test, int block = 32,
           int shift = 32);

struct QnrResult {
  double d_lambda = 0;
  double d_s = 0;
  double qnr = 0;
};

// No-reference protocol: spectral distortion from inter-band UIQI drift,
// spatial distortion from band-vs-PAN UIQI drift across scales.
QnrResult qnr(const RasterImage& fused, const RasterImage& msi_lr,
              const RasterImage& pan, const RasterImage& pan_lr,
              int block = 32);

struct MetricsReport {
  double psnr = 0;
  double sam = 0;
  double ergas = 0;
  double q2n = 0;
  std::optional<double> d_lambda;
  std::optional<double> d_s;
  std::optional<double> qnr;
};

}  // namespace upsam
