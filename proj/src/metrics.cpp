#include "upsam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace upsam {

namespace {

void require_same_shape(const RasterImage& a, const RasterImage& b,
                        const char* what) {
  if (a.width != b.width || a.height != b.height || a.bands != b.bands)
    throw DimensionError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" +
                         std::to_string(a.bands) + " vs " +
                         std::to_string(b.width) + "x" +
                         std::to_string(b.height) + "x" +
                         std::to_string(b.bands) + ")");
}

constexpr double kPsnrCap = 99.0;

}  // namespace

double psnr(const RasterImage& ref, const RasterImage& test) {
  require_same_shape(ref, test, "psnr");
  const std::size_t n = ref.pixels();
  double acc = 0;
  for (int b = 0; b < ref.bands; ++b) {
    const double* r = ref.band_data(b);
    const double* t = test.band_data(b);
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = r[i] - t[i];
      sse += e * e;
    }
    const double mse = sse / static_cast<double>(n);
    acc += mse == 0 ? kPsnrCap
                    : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return acc / ref.bands;
}

double sam(const RasterImage& ref, const RasterImage& test) {
  require_same_shape(ref, test, "sam");
  if (ref.bands < 2)
    throw DimensionError("sam needs at least 2 bands");
  const std::size_t n = ref.pixels();
  double acc = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0, nr = 0, nt = 0;
    for (int b = 0; b < ref.bands; ++b) {
      const double x = ref.samples[static_cast<std::size_t>(b) * n + i];
      const double y = test.samples[static_cast<std::size_t>(b) * n + i];
      dot += x * y;
      nr += x * x;
      nt += y * y;
    }
    if (nr == 0 || nt == 0) continue;
    const double c = std::clamp(dot / std::sqrt(nr * nt), -1.0, 1.0);
    acc += std::acos(c);
    ++used;
  }
  if (used == 0) return 0;
  return acc / static_cast<double>(used) * 180.0 / std::numbers::pi;
}

double ergas(const RasterImage& ref, const RasterImage& test, int factor) {
  require_same_shape(ref, test, "ergas");
  if (factor < 1) throw ConfigError("ergas factor must be >= 1");
  const std::size_t n = ref.pixels();
  double acc = 0;
  for (int b = 0; b < ref.bands; ++b) {
    const double* r = ref.band_data(b);
    const double* t = test.band_data(b);
    double mean = 0, sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += r[i];
      const double e = r[i] - t[i];
      sse += e * e;
    }
    mean /= static_cast<double>(n);
    if (mean == 0)
      throw DomainError("ergas: reference band " + std::to_string(b) +
                        " has zero mean");
    acc += sse / static_cast<double>(n) / (mean * mean);
  }
  return 100.0 / factor * std::sqrt(acc / ref.bands);
}

namespace {

// --- Cayley-Dickson arithmetic on power-of-two component vectors ---

// Conjugate: negate every non-real component.
std::vector<double> cd_conj(std::vector<double> x) {
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = -x[i];
  return x;
}

std::vector<double> cd_mul(const std::vector<double>& x,
                           const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n == 1) return {x[0] * y[0]};
  const std::size_t h = n / 2;
  const std::vector<double> x1(x.begin(), x.begin() + h);
  const std::vector<double> x2(x.begin() + h, x.end());
  const std::vector<double> y1(y.begin(), y.begin() + h);
  const std::vector<double> y2(y.begin() + h, y.end());
  // (x1,x2)(y1,y2) = (x1 y1 - y2* x2, y2 x1 + x2 y1*)
  const auto a = cd_mul(x1, y1);
  const auto b = cd_mul(cd_conj(y2), x2);
  const auto c = cd_mul(y2, x1);
  const auto d = cd_mul(x2, cd_conj(y1));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < h; ++i) {
    out[i] = a[i] - b[i];
    out[h + i] = c[i] + d[i];
  }
  return out;
}

double cd_norm(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Modulus carrying the sign of the real part; for 1-dimensional (real)
// inputs this is the identity, which is what makes q2n collapse to the
// classical signed UIQI on single-band images.
double cd_signed_modulus(const std::vector<double>& x) {
  const double m = cd_norm(x);
  return x[0] < 0 ? -m : m;
}

struct BlockGrid {
  int block = 0, shift = 0, nx = 0, ny = 0;
};

BlockGrid make_grid(int w, int h, int block, int shift) {
  if (block < 1 || shift < 1)
    throw ConfigError("block and shift must be >= 1");
  if (block > w || block > h)
    throw DomainError("image " + std::to_string(w) + "x" + std::to_string(h) +
                      " is smaller than the " + std::to_string(block) +
                      "-pixel block");
  BlockGrid g;
  g.block = block;
  g.shift = shift;
  g.nx = (w - block) / shift + 1;
  g.ny = (h - block) / shift + 1;
  return g;
}

}  // namespace

double uiqi(const RasterImage& a, const RasterImage& b, int block, int shift) {
  require_same_shape(a, b, "uiqi");
  if (a.bands != 1) throw DimensionError("uiqi expects single-band images");
  const BlockGrid g = make_grid(a.width, a.height, block, shift);
  const double* pa = a.band_data(0);
  const double* pb = b.band_data(0);
  const double n = static_cast<double>(g.block) * g.block;

  double acc = 0;
  for (int by = 0; by < g.ny; ++by) {
    for (int bx = 0; bx < g.nx; ++bx) {
      const int x0 = bx * g.shift, y0 = by * g.shift;
      double ma = 0, mb = 0;
      bool identical = true;
      for (int y = 0; y < g.block; ++y)
        for (int x = 0; x < g.block; ++x) {
          const std::size_t i =
              static_cast<std::size_t>(y0 + y) * a.width + (x0 + x);
          ma += pa[i];
          mb += pb[i];
          identical = identical && pa[i] == pb[i];
        }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (int y = 0; y < g.block; ++y)
        for (int x = 0; x < g.block; ++x) {
          const std::size_t i =
              static_cast<std::size_t>(y0 + y) * a.width + (x0 + x);
          const double da = pa[i] - ma, db = pb[i] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= n;
      vb /= n;
      cov /= n;

      const double sa = std::sqrt(va), sb = std::sqrt(vb);
      const double corr = sa * sb > 0 ? cov / (sa * sb)
                          : identical ? 1.0
                                      : 0.0;
      const double mden = ma * ma + mb * mb;
      const double lum = mden > 0 ? 2.0 * ma * mb / mden : 1.0;
      const double sden = va + vb;
      const double con = sden > 0 ? 2.0 * sa * sb / sden : 1.0;
      acc += corr * lum * con;
    }
  }
  return acc / (static_cast<double>(g.nx) * g.ny);
}

double q2n(const RasterImage& ref, const RasterImage& test, int block,
           int shift) {
  require_same_shape(ref, test, "q2n");
  const BlockGrid g = make_grid(ref.width, ref.height, block, shift);
  std::size_t dim = 1;
  while (dim < static_cast<std::size_t>(ref.bands)) dim *= 2;
  const std::size_t npix = ref.pixels();
  const double n = static_cast<double>(g.block) * g.block;

  double acc = 0;
  std::vector<double> z1(dim, 0.0), z2(dim, 0.0);
  for (int by = 0; by < g.ny; ++by) {
    for (int bx = 0; bx < g.nx; ++bx) {
      const int x0 = bx * g.shift, y0 = by * g.shift;

      std::vector<double> mu1(dim, 0.0), mu2(dim, 0.0);
      bool identical = true;
      for (int y = 0; y < g.block; ++y)
        for (int x = 0; x < g.block; ++x) {
          const std::size_t i =
              static_cast<std::size_t>(y0 + y) * ref.width + (x0 + x);
          for (int bnd = 0; bnd < ref.bands; ++bnd) {
            const double a =
                ref.samples[static_cast<std::size_t>(bnd) * npix + i];
            const double b =
                test.samples[static_cast<std::size_t>(bnd) * npix + i];
            mu1[bnd] += a;
            mu2[bnd] += b;
            identical = identical && a == b;
          }
        }
      for (auto& v : mu1) v /= n;
      for (auto& v : mu2) v /= n;

      std::vector<double> cov(dim, 0.0);
      double v1 = 0, v2 = 0;
      for (int y = 0; y < g.block; ++y)
        for (int x = 0; x < g.block; ++x) {
          const std::size_t i =
              static_cast<std::size_t>(y0 + y) * ref.width + (x0 + x);
          std::fill(z1.begin(), z1.end(), 0.0);
          std::fill(z2.begin(), z2.end(), 0.0);
          for (int bnd = 0; bnd < ref.bands; ++bnd) {
            z1[bnd] = ref.samples[static_cast<std::size_t>(bnd) * npix + i] -
                      mu1[bnd];
            z2[bnd] = test.samples[static_cast<std::size_t>(bnd) * npix + i] -
                      mu2[bnd];
          }
          const auto prod = cd_mul(z1, cd_conj(z2));
          for (std::size_t k = 0; k < dim; ++k) cov[k] += prod[k];
          for (std::size_t k = 0; k < dim; ++k) {
            v1 += z1[k] * z1[k];
            v2 += z2[k] * z2[k];
          }
        }
      for (auto& v : cov) v /= n;
      v1 /= n;
      v2 /= n;

      const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
      const double corr = s1 * s2 > 0 ? cd_signed_modulus(cov) / (s1 * s2)
                          : identical ? 1.0
                                      : 0.0;
      const double m1 = cd_norm(mu1), m2 = cd_norm(mu2);
      const double mden = m1 * m1 + m2 * m2;
      const double lum =
          mden > 0
              ? std::clamp(
                    2.0 * cd_signed_modulus(cd_mul(mu1, cd_conj(mu2))) / mden,
                    -1.0, 1.0)
              : 1.0;
      const double sden = v1 + v2;
      const double con = sden > 0 ? 2.0 * s1 * s2 / sden : 1.0;
      acc += corr * lum * con;
    }
  }
  return acc / (static_cast<double>(g.nx) * g.ny);
}

namespace {

RasterImage band_view(const RasterImage& img, int b) {
  RasterImage out(img.width, img.height, 1);
  const double* src = img.band_data(b);
  std::copy(src, src + img.pixels(), out.samples.begin());
  return out;
}

}  // namespace

QnrResult qnr(const RasterImage& fused, const RasterImage& msi_lr,
              const RasterImage& pan, const RasterImage& pan_lr, int block) {
  if (fused.bands != msi_lr.bands)
    throw DimensionError("qnr: fused and msi band counts differ");
  if (fused.bands < 2)
    throw DimensionError("qnr needs at least 2 bands");
  if (pan.bands != 1 || pan_lr.bands != 1)
    throw DimensionError("qnr: pan images must be single-band");
  if (pan.width != fused.width || pan.height != fused.height)
    throw DimensionError("qnr: pan and fused dimensions differ");
  if (pan_lr.width != msi_lr.width || pan_lr.height != msi_lr.height)
    throw DimensionError("qnr: low-resolution pan and msi dimensions differ");

  const int L = fused.bands;
  std::vector<RasterImage> xb, mb;
  for (int b = 0; b < L; ++b) {
    xb.push_back(band_view(fused, b));
    mb.push_back(band_view(msi_lr, b));
  }

  QnrResult out;
  double dl = 0;
  for (int l = 0; l < L; ++l)
    for (int r = l + 1; r < L; ++r)
      dl += 2.0 * std::abs(uiqi(xb[l], xb[r], block, block) -
                           uiqi(mb[l], mb[r], block, block));
  out.d_lambda = dl / (static_cast<double>(L) * (L - 1));

  double ds = 0;
  for (int l = 0; l < L; ++l)
    ds += std::abs(uiqi(xb[l], pan, block, block) -
                   uiqi(mb[l], pan_lr, block, block));
  out.d_s = ds / L;

  out.qnr = (1.0 - out.d_lambda) * (1.0 - out.d_s);
  return out;
}

}  // namespace upsam
