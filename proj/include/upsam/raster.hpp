#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "upsam/errors.hpp"

namespace upsam {

// In-memory raster.  Samples are kept as double for headroom in the
// numeric pipeline; the on-disk format is 32-bit float (see load/save).
// Layout: band-sequential, row-major within each band.
struct RasterImage {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<double> samples;

  RasterImage() = default;
  RasterImage(int w, int h, int b, double fill = 0.0)
      : width(w), height(h), bands(b),
        samples(static_cast<std::size_t>(w) * h * b, fill) {}

  std::size_t pixels() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::size_t size() const { return samples.size(); }

  double& at(int band, int y, int x) {
    return samples[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  double at(int band, int y, int x) const {
    return samples[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  double* band_data(int band) {
    return samples.data() + static_cast<std::size_t>(band) * pixels();
  }
  const double* band_data(int band) const {
    return samples.data() + static_cast<std::size_t>(band) * pixels();
  }
};

// Sidecar header mirrored to/from `<name>.json`.
struct RasterHeader {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::string dtype = "f32";
  std::string layout = "bsq";
  std::string endianness = "little";
  std::optional<std::vector<std::string>> band_names;
  std::optional<double> resolution_m;
};

// A co-registered MSI/PAN acquisition; pan covers the same footprint at
// `factor` times the MSI grid resolution.
struct MsiPanPair {
  RasterImage msi;
  RasterImage pan;
  int factor = 0;
};

// Validates the size relation (pan dims == factor * msi dims, pan single
// band) and derives the factor.  Throws DimensionError otherwise.
MsiPanPair make_msi_pan_pair(RasterImage msi, RasterImage pan);

// Per-pixel integer labels (cluster ids, argmax indices, ...).
struct IndexMap {
  int width = 0;
  int height = 0;
  std::vector<int> values;

  IndexMap() = default;
  IndexMap(int w, int h, int fill = 0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h, fill) {}

  int& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  int at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

// File I/O.  A raster lives in two files sharing one stem: `<stem>.json`
// (header) and `<stem>.f32` (raw little-endian float32 payload, bsq).
// Paths may be given with either extension or with none.
std::string raster_stem(const std::string& path);

RasterImage load_raster(const std::string& path);
RasterImage load_raster(const std::string& path, RasterHeader* header_out);
void save_raster(const RasterImage& img, const std::string& path);
void save_raster(const RasterImage& img, const std::string& path,
                 const RasterHeader& meta);  // meta supplies names/resolution

enum class NormalizeMode { GlobalMax, PerBandMax, FixedPeak };

// Rescales samples into [0,1].  Max modes divide by the (global or
// per-band) maximum, which must be positive; FixedPeak divides by `peak`
// and saturates at 1 (sensor counts above the declared peak clip).
RasterImage normalize(const RasterImage& img, NormalizeMode mode,
                      double peak = 1.0);

// Writes an 8-bit RGB PNG of three selected bands, each channel stretched
// linearly to its own 1st..99th percentile (constant channels map to mid
// gray).
void export_preview(const RasterImage& img, std::array<int, 3> band_indices,
                    const std::string& path);

// Raw PNG emission for precomputed 8-bit RGB rows (used by export_preview
// and the CLI's label previews).
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<unsigned char>& rgb);

}  // namespace upsam
