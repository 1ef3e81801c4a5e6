// Brute-force reference implementations used to cross-check the library.
// Everything here is deliberately naive and written independently of the
// code under test: plain loops, no shared helpers, no clever algebra.
#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "upsam/raster.hpp"

namespace oracle {

inline upsam::RasterImage random_raster(int w, int h, int bands,
                                        std::uint64_t seed, double lo = 0.0,
                                        double hi = 1.0) {
  upsam::RasterImage img(w, h, bands);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  for (auto& v : img.samples) v = uni(rng);
  return img;
}

inline double naive_psnr(const upsam::RasterImage& ref,
                         const upsam::RasterImage& test) {
  double total = 0;
  for (int b = 0; b < ref.bands; ++b) {
    double sse = 0;
    for (int y = 0; y < ref.height; ++y)
      for (int x = 0; x < ref.width; ++x) {
        const double e = ref.at(b, y, x) - test.at(b, y, x);
        sse += e * e;
      }
    const double mse = sse / (static_cast<double>(ref.width) * ref.height);
    double db;
    if (mse == 0)
      db = 99.0;
    else
      db = 10.0 * std::log10(1.0 / mse);
    if (db > 99.0) db = 99.0;
    total += db;
  }
  return total / ref.bands;
}

inline double naive_sam_deg(const upsam::RasterImage& ref,
                            const upsam::RasterImage& test) {
  double acc = 0;
  long used = 0;
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      double dot = 0, nr = 0, nt = 0;
      for (int b = 0; b < ref.bands; ++b) {
        dot += ref.at(b, y, x) * test.at(b, y, x);
        nr += ref.at(b, y, x) * ref.at(b, y, x);
        nt += test.at(b, y, x) * test.at(b, y, x);
      }
      if (nr == 0 || nt == 0) continue;
      double c = dot / (std::sqrt(nr) * std::sqrt(nt));
      if (c > 1) c = 1;
      if (c < -1) c = -1;
      acc += std::acos(c);
      ++used;
    }
  if (used == 0) return 0;
  return acc / used * 180.0 / 3.14159265358979323846;
}

inline double naive_ergas(const upsam::RasterImage& ref,
                          const upsam::RasterImage& test, int factor) {
  const double n = static_cast<double>(ref.width) * ref.height;
  double acc = 0;
  for (int b = 0; b < ref.bands; ++b) {
    double mean = 0;
    for (int y = 0; y < ref.height; ++y)
      for (int x = 0; x < ref.width; ++x) mean += ref.at(b, y, x);
    mean /= n;
    double sse = 0;
    for (int y = 0; y < ref.height; ++y)
      for (int x = 0; x < ref.width; ++x) {
        const double e = ref.at(b, y, x) - test.at(b, y, x);
        sse += e * e;
      }
    acc += (sse / n) / (mean * mean);
  }
  return 100.0 / factor * std::sqrt(acc / ref.bands);
}

// Blockwise single-band quality index with the documented degenerate-block
// conventions: zero-variance blocks contribute correlation 1 when the two
// blocks are bit-identical and 0 otherwise; zero mean / variance
// denominators leave the luminance / contrast factor at 1.
inline double naive_uiqi(const upsam::RasterImage& a,
                         const upsam::RasterImage& b, int block, int shift) {
  const int nx = (a.width - block) / shift + 1;
  const int ny = (a.height - block) / shift + 1;
  double acc = 0;
  for (int by = 0; by < ny; ++by)
    for (int bx = 0; bx < nx; ++bx) {
      const int x0 = bx * shift, y0 = by * shift;
      const double n = static_cast<double>(block) * block;
      double ma = 0, mb = 0;
      bool same = true;
      for (int y = y0; y < y0 + block; ++y)
        for (int x = x0; x < x0 + block; ++x) {
          ma += a.at(0, y, x);
          mb += b.at(0, y, x);
          if (a.at(0, y, x) != b.at(0, y, x)) same = false;
        }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (int y = y0; y < y0 + block; ++y)
        for (int x = x0; x < x0 + block; ++x) {
          va += (a.at(0, y, x) - ma) * (a.at(0, y, x) - ma);
          vb += (b.at(0, y, x) - mb) * (b.at(0, y, x) - mb);
          cov += (a.at(0, y, x) - ma) * (b.at(0, y, x) - mb);
        }
      va /= n;
      vb /= n;
      cov /= n;
      double corr;
      if (va > 0 && vb > 0)
        corr = cov / (std::sqrt(va) * std::sqrt(vb));
      else
        corr = same ? 1.0 : 0.0;
      double lum;
      if (ma * ma + mb * mb > 0)
        lum = 2.0 * ma * mb / (ma * ma + mb * mb);
      else
        lum = 1.0;
      double con;
      if (va + vb > 0)
        con = 2.0 * std::sqrt(va) * std::sqrt(vb) / (va + vb);
      else
        con = 1.0;
      acc += corr * lum * con;
    }
  return acc / (static_cast<double>(nx) * ny);
}

// Two-band hypercomplex quality index spelled out with std::complex: each
// pixel's (band0, band1) spectrum becomes band0 + i*band1 and every product
// in the correlation / luminance factors is an explicit complex
// multiplication.  The modulus carries the sign of the real part.
inline double q2_complex(const upsam::RasterImage& ref,
                         const upsam::RasterImage& test, int block,
                         int shift) {
  using C = std::complex<double>;
  auto signed_mod = [](C z) {
    return z.real() < 0 ? -std::abs(z) : std::abs(z);
  };
  const int nx = (ref.width - block) / shift + 1;
  const int ny = (ref.height - block) / shift + 1;
  const double n = static_cast<double>(block) * block;
  double acc = 0;
  for (int by = 0; by < ny; ++by)
    for (int bx = 0; bx < nx; ++bx) {
      const int x0 = bx * shift, y0 = by * shift;
      C mu1(0, 0), mu2(0, 0);
      bool same = true;
      for (int y = y0; y < y0 + block; ++y)
        for (int x = x0; x < x0 + block; ++x) {
          const C z1(ref.at(0, y, x), ref.at(1, y, x));
          const C z2(test.at(0, y, x), test.at(1, y, x));
          mu1 += z1;
          mu2 += z2;
          if (z1 != z2) same = false;
        }
      mu1 /= n;
      mu2 /= n;
      C cov(0, 0);
      double v1 = 0, v2 = 0;
      for (int y = y0; y < y0 + block; ++y)
        for (int x = x0; x < x0 + block; ++x) {
          const C d1 = C(ref.at(0, y, x), ref.at(1, y, x)) - mu1;
          const C d2 = C(test.at(0, y, x), test.at(1, y, x)) - mu2;
          cov += d1 * std::conj(d2);
          v1 += std::norm(d1);
          v2 += std::norm(d2);
        }
      cov /= n;
      v1 /= n;
      v2 /= n;
      const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
      double corr;
      if (s1 * s2 > 0)
        corr = signed_mod(cov) / (s1 * s2);
      else
        corr = same ? 1.0 : 0.0;
      const double mden = std::norm(mu1) + std::norm(mu2);
      double lum;
      if (mden > 0) {
        lum = 2.0 * signed_mod(mu1 * std::conj(mu2)) / mden;
        if (lum > 1) lum = 1;
        if (lum < -1) lum = -1;
      } else {
        lum = 1.0;
      }
      double con;
      if (v1 + v2 > 0)
        con = 2.0 * s1 * s2 / (v1 + v2);
      else
        con = 1.0;
      acc += corr * lum * con;
    }
  return acc / (static_cast<double>(nx) * ny);
}

// Magnitude of a centered odd-length kernel's frequency response at
// angular frequency omega (radians per sample).
inline double dft_gain(const std::vector<double>& k, double omega) {
  const int radius = static_cast<int>(k.size()) / 2;
  double re = 0, im = 0;
  for (int t = -radius; t <= radius; ++t) {
    re += k[t + radius] * std::cos(omega * t);
    im -= k[t + radius] * std::sin(omega * t);
  }
  return std::sqrt(re * re + im * im);
}

// Half-sample symmetric mirror: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// Dense (non-separable) 2-D convolution with the outer-product kernel
// K[j][i] = k[j]*k[i] and mirrored boundaries.
inline std::vector<double> conv2_mirror(const std::vector<double>& src, int w,
                                        int h, const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size()) / 2;
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int sy = mirror_index(y + dy, h);
          const int sx = mirror_index(x + dx, w);
          acc += k[dy + radius] * k[dx + radius] *
                 src[static_cast<std::size_t>(sy) * w + sx];
        }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

// Population covariance / variance over an index subset, two-pass.
inline double subset_cov(const std::vector<double>& a,
                         const std::vector<double>& b,
                         const std::vector<std::size_t>& idx) {
  double ma = 0, mb = 0;
  for (std::size_t i : idx) {
    ma += a[i];
    mb += b[i];
  }
  ma /= idx.size();
  mb /= idx.size();
  double c = 0;
  for (std::size_t i : idx) c += (a[i] - ma) * (b[i] - mb);
  return c / idx.size();
}

}  // namespace oracle
