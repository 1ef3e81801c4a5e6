#pragma once

#include <cstdint>
#include <vector>

#include "upsam/raster.hpp"

namespace upsam {

// The committed 3-signature / 8-band spectral set used by the toy study:
// one monotone increasing curve, one monotone decreasing, one band-peaked.
std::vector<std::vector<double>> toy_signatures();

struct ToyFixture {
  std::vector<std::vector<double>> signatures;  // 3 x 8
  RasterImage abundance;   // 3 proportion maps, simplex per pixel
  RasterImage msi_clean;   // abundance . signatures
  RasterImage msi;         // msi_clean + 30 dB AWGN
  IndexMap labels;         // per-pixel argmax of abundance
};

// 64x64 three-region layout with sigmoid-blended (mixed-pixel) region
// boundaries; deterministic per seed.
ToyFixture gen_toy(std::uint64_t seed);

// Adds zero-mean Gaussian noise sized for the requested SNR (dB).  An
// infinite snr_db returns the image unchanged.
RasterImage add_noise_snr(const RasterImage& img, double snr_db,
                          std::uint64_t seed);

// Lloyd's algorithm over pixel spectra with k-means++ seeding; at most
// 100 iterations, stops when centers move less than 1e-6.
IndexMap kmeans_labels(const RasterImage& msi, int k, std::uint64_t seed);

// Fraction of pixels matched under the best injective relabeling of one
// map's labels onto the other's.
double best_permutation_agreement(const IndexMap& a, const IndexMap& b);

struct SyntheticPair {
  RasterImage hr;                  // ground-truth HR MSI
  MsiPanPair pair;                 // (MTF-degraded LR MSI, HR PAN)
  std::vector<double> alpha_true;  // PAN band weights used for synthesis
};

// Fabricates a full-reference evaluation scene: mixed signatures over
// blob/cell structure with sinusoidal texture, PAN as a known positive
// band combination, LR MSI via the Wald MTF degradation.
SyntheticPair gen_synthetic_pair(
    const std::vector<std::vector<double>>& signatures, int size, int factor,
    std::uint64_t seed);

}  // namespace upsam
