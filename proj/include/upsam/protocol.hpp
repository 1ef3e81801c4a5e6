#pragma once

#include <vector>

#include "upsam/attnet.hpp"
#include "upsam/raster.hpp"

namespace upsam {

enum class UpsampleKernel { Bicubic, Nearest };

struct DegradeConfig {
  int factor = 4;
  // Gaussian degradation filter gain at the decimated grid's Nyquist
  // frequency; one entry per band, or a single entry broadcast to all.
  std::vector<double> mtf_gains = {0.29};
  int pan_taps = 41;  // windowed-sinc length for the PAN low-pass
  UpsampleKernel kernel = UpsampleKernel::Bicubic;
};

void validate_degrade_config(const DegradeConfig& cfg);

// 1-D Gaussian taps whose frequency response at omega = pi/factor equals
// nyquist_gain; unit DC gain (taps sum to 1).
std::vector<double> mtf_kernel(double nyquist_gain, int factor);

// 1-D Hamming-windowed sinc with cutoff pi/factor, `taps` odd, unit DC.
std::vector<double> sinc_kernel(int factor, int taps);

// Per band: separable convolution with the band's MTF kernel (symmetric
// boundary), then decimation by `factor` with phase offset 0.
RasterImage mtf_degrade_msi(const RasterImage& msi, const DegradeConfig& cfg);

// Windowed-sinc low-pass then decimation; the PAN analogue.
RasterImage downsample_pan(const RasterImage& pan, const DegradeConfig& cfg);

// Separable interpolation to exactly factor-times dimensions.  Output
// pixel x maps to source coordinate x / factor (so sample r*i lands on
// source sample i, the inverse of phase-0 decimation).
RasterImage upsample(const RasterImage& img, int factor,
                     UpsampleKernel kernel);
AttentionStack upsample_stack(const AttentionStack& s, int factor,
                              UpsampleKernel kernel);

struct WaldReduced {
  MsiPanPair pair;        // degraded inputs at 1/factor scale
  RasterImage reference;  // the original MSI, the evaluation ground truth
};

WaldReduced wald_reduce(const MsiPanPair& pair, const DegradeConfig& cfg);

}  // namespace upsam
