#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upsam/attnet.hpp"
#include "upsam/protocol.hpp"
#include "upsam/raster.hpp"

namespace upsam {

// Least-squares PAN synthesis weights: pan ~ sum_k alpha[k]*band_k + b.
struct RegressionCoeffs {
  std::vector<double> alpha;
  double intercept = 0;
};

// Per-pixel argmax attention index; region labels for the spatially
// variant gains.
using Msim = IndexMap;

struct GainTable {
  enum class Mode { Global, Variant };
  Mode mode = Mode::Global;
  int maps = 0;
  int regions = 1;  // 1 in global mode, attention map count in variant mode
  std::vector<double> g;           // maps x regions, row-major
  std::vector<char> degenerate;    // per region: too small / zero variance

  double at(int map, int region) const {
    return g[static_cast<std::size_t>(map) * regions + region];
  }
  double& at(int map, int region) {
    return g[static_cast<std::size_t>(map) * regions + region];
  }
};

enum class InjectionMode { Global, Msim };
enum class InjectDomain { Maps, Bands };

struct FusionConfig {
  InjectionMode injection = InjectionMode::Msim;
  InjectDomain domain = InjectDomain::Maps;
  UpsampleKernel kernel = UpsampleKernel::Bicubic;
  NetworkConfig net;       // net.L is filled from the input pair
  std::uint64_t seed = 0;  // copied into net.seed by pansharpen
};

struct StageTiming {
  std::string name;
  double ms = 0;
};

struct RunReport {
  std::vector<LossLogEntry> loss_history;
  RegressionCoeffs coeffs;
  GainTable gains;
  std::vector<int> degenerate_regions;
  std::vector<StageTiming> timings;
};

// OLS with intercept via normal equations (Tikhonov damping 1e-8 plus one
// refinement step against the undamped system).
RegressionCoeffs fit_pan_regression(const RasterImage& msi_lr,
                                    const RasterImage& pan_lr);

// P_low_hat = sum_k alpha_k * band_k + intercept, pixelwise.
RasterImage synth_low_pan(const RegressionCoeffs& coeffs,
                          const RasterImage& msi_hat_up);

// D = pan - pan_low_hat.
RasterImage extract_detail(const RasterImage& pan,
                           const RasterImage& pan_low_hat);

// Per-pixel argmax over maps, ties to the lowest index.
Msim compute_msim(const AttentionStack& s_up);

// Injection gains: cov(map_i, pan_low_hat)/var(pan_low_hat), either over
// the whole frame or per MSIM region (regions under 8 pixels or with
// vanishing variance get gain 0 and a degenerate flag).
GainTable global_gains(const AttentionStack& s_up,
                       const RasterImage& pan_low_hat);
GainTable variant_gains(const AttentionStack& s_up,
                        const RasterImage& pan_low_hat, const Msim& msim);
// Same statistics with multispectral bands playing the role of the maps
// (the band-domain injection ablation).
GainTable global_gains(const RasterImage& bands_up,
                       const RasterImage& pan_low_hat);
GainTable variant_gains(const RasterImage& bands_up,
                        const RasterImage& pan_low_hat, const Msim& msim);

// X = decode_image(S_up + G o D): adds the gained detail to every
// attention map, then projects back through the decoder.  Global tables
// ignore `msim`; variant tables require it.
RasterImage inject_and_reconstruct(const TrainedModel& model,
                                   const AttentionStack& s_up,
                                   const GainTable& gains,
                                   const RasterImage& detail,
                                   const Msim* msim);
// Band-domain variant: adds gained detail directly to the upsampled
// reconstruction's bands, no decoding.
RasterImage inject_bands(const RasterImage& msi_hat_up,
                         const GainTable& gains, const RasterImage& detail,
                         const Msim* msim);

// The full pipeline: train on the LR MSI, synthesize the low-resolution
// PAN, extract detail, estimate gains, reconstruct the HR MSI.
RasterImage pansharpen(const MsiPanPair& pair, const FusionConfig& cfg,
                       RunReport* report = nullptr);

}  // namespace upsam
