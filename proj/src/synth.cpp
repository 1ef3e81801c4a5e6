#include "upsam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include "upsam/protocol.hpp"

namespace upsam {

std::vector<std::vector<double>> toy_signatures() {
  return {
      {0.18, 0.26, 0.34, 0.42, 0.52, 0.62, 0.72, 0.80},
      {0.66, 0.60, 0.52, 0.46, 0.40, 0.34, 0.28, 0.22},
      {0.22, 0.34, 0.50, 0.68, 0.78, 0.62, 0.44, 0.30},
  };
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

ToyFixture gen_toy(std::uint64_t seed) {
  constexpr int kSize = 64;
  constexpr int kBands = 8;
  ToyFixture fx;
  fx.signatures = toy_signatures();

  // Two wavy horizontal boundaries split the image into three regions
  // with a ~4-pixel sigmoid blend across each boundary.  The bottom
  // region is itself a sub-pixel mixture: its third-signature fraction
  // ramps from 0.36 to 0.96 left to right, so a strip of it is majority
  // first-signature.  Hard clustering on raw spectra cannot track that
  // (the bottom cluster is one elongated cloud), while abundance argmax
  // keeps a clean 50% boundary.
  fx.abundance = RasterImage(kSize, kSize, 3);
  fx.labels = IndexMap(kSize, kSize);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const double b1 =
          kSize / 3.0 +
          2.5 * std::sin(2.0 * std::numbers::pi * 2.0 * x / kSize);
      const double b2 =
          2.0 * kSize / 3.0 +
          2.5 * std::cos(2.0 * std::numbers::pi * 1.5 * x / kSize + 1.0);
      const double w1 = sigmoid(b1 - y);
      const double w3 = sigmoid(y - b2);
      const double alpha = 0.36 + 0.60 * x / (kSize - 1.0);
      const double a1 = w1 + w3 * (1.0 - alpha);
      const double a2 = 1.0 - w1 - w3;
      const double a3 = w3 * alpha;
      fx.abundance.at(0, y, x) = a1;
      fx.abundance.at(1, y, x) = a2;
      fx.abundance.at(2, y, x) = a3;
      int best = 0;
      double bv = a1;
      if (a2 > bv) { bv = a2; best = 1; }
      if (a3 > bv) { best = 2; }
      fx.labels.at(y, x) = best;
    }
  }

  fx.msi_clean = RasterImage(kSize, kSize, kBands);
  for (int k = 0; k < kBands; ++k)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        double v = 0;
        for (int t = 0; t < 3; ++t)
          v += fx.abundance.at(t, y, x) * fx.signatures[t][k];
        fx.msi_clean.at(k, y, x) = v;
      }

  fx.msi = add_noise_snr(fx.msi_clean, 30.0, seed);
  return fx;
}

RasterImage add_noise_snr(const RasterImage& img, double snr_db,
                          std::uint64_t seed) {
  if (std::isnan(snr_db)) throw DomainError("snr_db is NaN");
  if (std::isinf(snr_db)) return img;
  double power = 0;
  for (double v : img.samples) power += v * v;
  power /= static_cast<double>(img.size());
  if (power == 0)
    throw DomainError("cannot scale noise against a zero-power image");
  const double sigma = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  RasterImage out = img;
  for (auto& v : out.samples) v += dist(rng);
  return out;
}

IndexMap kmeans_labels(const RasterImage& msi, int k, std::uint64_t seed) {
  const std::size_t npix = msi.pixels();
  if (npix == 0) throw DomainError("kmeans on an empty image");
  if (k < 1 || static_cast<std::size_t>(k) > npix)
    throw DomainError("kmeans k=" + std::to_string(k) +
                      " out of range for " + std::to_string(npix) +
                      " pixels");
  const int L = msi.bands;
  auto spectrum = [&](std::size_t i, std::vector<double>& out) {
    for (int b = 0; b < L; ++b)
      out[b] = msi.samples[static_cast<std::size_t>(b) * npix + i];
  };
  auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (int j = 0; j < L; ++j) {
      const double e = a[j] - b[j];
      d += e * e;
    }
    return d;
  };

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centers;
  std::vector<double> px(L), d2(npix, std::numeric_limits<double>::max());

  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> uni(0, npix - 1);
  spectrum(uni(rng), px);
  centers.push_back(px);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < npix; ++i) {
      spectrum(i, px);
      d2[i] = std::min(d2[i], dist2(px, centers.back()));
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0) {
      std::discrete_distribution<std::size_t> dd(d2.begin(), d2.end());
      pick = dd(rng);
    } else {
      pick = uni(rng);
    }
    spectrum(pick, px);
    centers.push_back(px);
  }

  IndexMap labels(msi.width, msi.height);
  std::vector<std::vector<double>> sums(k, std::vector<double>(L));
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < 100; ++iter) {
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < npix; ++i) {
      spectrum(i, px);
      int best = 0;
      double bd = dist2(px, centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(px, centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      labels.values[i] = best;
      ++counts[best];
      for (int j = 0; j < L; ++j) sums[best][j] += px[j];
    }
    // Empty clusters grab the point farthest from its assigned center.
    for (int c = 0; c < k; ++c) {
      if (counts[c]) continue;
      double worst = -1;
      std::size_t pick = 0;
      for (std::size_t i = 0; i < npix; ++i) {
        if (counts[labels.values[i]] <= 1) continue;
        spectrum(i, px);
        const double d = dist2(px, centers[labels.values[i]]);
        if (d > worst) {
          worst = d;
          pick = i;
        }
      }
      if (worst < 0) continue;  // nothing safely stealable
      spectrum(pick, px);
      const int old = labels.values[pick];
      for (int j = 0; j < L; ++j) {
        sums[old][j] -= px[j];
        sums[c][j] = px[j];
      }
      --counts[old];
      counts[c] = 1;
      labels.values[pick] = c;
    }
    double shift2 = 0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the stale center
      double s = 0;
      for (int j = 0; j < L; ++j) {
        const double nc = sums[c][j] / static_cast<double>(counts[c]);
        const double d = nc - centers[c][j];
        s += d * d;
        centers[c][j] = nc;
      }
      shift2 = std::max(shift2, s);
    }
    if (shift2 < 1e-12) break;
  }
  return labels;
}

double best_permutation_agreement(const IndexMap& a, const IndexMap& b) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionError("label maps have different dimensions");
  const std::size_t n = a.values.size();
  if (n == 0) throw DomainError("label maps are empty");
  int ka = 0, kb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.values[i] < 0 || b.values[i] < 0)
      throw DomainError("negative label");
    ka = std::max(ka, a.values[i] + 1);
    kb = std::max(kb, b.values[i] + 1);
  }
  if (ka > 12 || kb > 12)
    throw DomainError("too many labels for exhaustive matching");

  // Confusion matrix, then exhaustive injective assignment of the smaller
  // label set into the larger.
  std::vector<std::vector<std::size_t>> conf(ka,
                                             std::vector<std::size_t>(kb, 0));
  for (std::size_t i = 0; i < n; ++i) ++conf[a.values[i]][b.values[i]];
  const bool flip = ka > kb;
  const int rows = flip ? kb : ka, cols = flip ? ka : kb;
  auto cell = [&](int r, int c) { return flip ? conf[c][r] : conf[r][c]; };

  std::size_t best = 0;
  std::vector<char> used(cols, 0);
  std::size_t matched = 0;
  const std::function<void(int)> rec = [&](int r) {
    if (r == rows) {
      best = std::max(best, matched);
      return;
    }
    for (int c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      matched += cell(r, c);
      rec(r + 1);
      matched -= cell(r, c);
      used[c] = 0;
    }
  };
  rec(0);
  return static_cast<double>(best) / static_cast<double>(n);
}

SyntheticPair gen_synthetic_pair(
    const std::vector<std::vector<double>>& signatures, int size, int factor,
    std::uint64_t seed) {
  if (signatures.size() < 2)
    throw DomainError("need at least 2 signatures");
  const int c = static_cast<int>(signatures.size());
  const int L = static_cast<int>(signatures[0].size());
  if (L < 2) throw DomainError("signatures need at least 2 bands");
  for (const auto& s : signatures) {
    if (static_cast<int>(s.size()) != L)
      throw DomainError("signatures have inconsistent band counts");
    for (double v : s)
      if (!std::isfinite(v)) throw DomainError("non-finite signature value");
  }
  if (factor < 2) throw DimensionError("factor must be >= 2");
  if (size % factor != 0 || size < 2 * factor)
    throw DimensionError("size must be a multiple of factor and >= 2*factor");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // Cell structure (hard edges), blobs (smooth patches), and sinusoidal
  // texture, combined into per-signature scores.
  constexpr int kSites = 10;
  struct Site { double x, y; int pref; };
  std::vector<Site> sites(kSites);
  for (int i = 0; i < kSites; ++i)
    sites[i] = {uni(rng) * size, uni(rng) * size, i % c};

  constexpr int kBlobs = 8;
  struct Blob { double x, y, sigma, amp; int pref; };
  std::vector<Blob> blobs(kBlobs);
  for (int i = 0; i < kBlobs; ++i)
    blobs[i] = {uni(rng) * size, uni(rng) * size,
                size * (1.0 / 16 + uni(rng) * (1.0 / 6 - 1.0 / 16)),
                0.8 + 0.8 * uni(rng),
                static_cast<int>(uni(rng) * c) % c};

  struct Wave { double fx, fy, px, py; };
  std::vector<Wave> waves(c);
  for (int t = 0; t < c; ++t)
    waves[t] = {2.0 + 4.0 * uni(rng), 2.0 + 4.0 * uni(rng),
                2 * std::numbers::pi * uni(rng),
                2 * std::numbers::pi * uni(rng)};

  SyntheticPair out;
  out.hr = RasterImage(size, size, L);
  std::vector<double> score(c), ab(c);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int nearest = 0;
      double nd = std::numeric_limits<double>::max();
      for (int i = 0; i < kSites; ++i) {
        const double dx = x - sites[i].x, dy = y - sites[i].y;
        const double d = dx * dx + dy * dy;
        if (d < nd) {
          nd = d;
          nearest = i;
        }
      }
      for (int t = 0; t < c; ++t) {
        double sc = t == sites[nearest].pref ? 1.2 : 0.0;
        for (const auto& bl : blobs) {
          if (bl.pref != t) continue;
          const double dx = x - bl.x, dy = y - bl.y;
          sc += bl.amp *
                std::exp(-(dx * dx + dy * dy) / (2.0 * bl.sigma * bl.sigma));
        }
        sc += 0.4 *
              std::sin(2 * std::numbers::pi * waves[t].fx * x / size +
                       waves[t].px) *
              std::sin(2 * std::numbers::pi * waves[t].fy * y / size +
                       waves[t].py);
        score[t] = sc;
      }
      const double mx = *std::max_element(score.begin(), score.end());
      double denom = 0;
      for (int t = 0; t < c; ++t) {
        ab[t] = std::exp((score[t] - mx) / 0.25);
        denom += ab[t];
      }
      for (int t = 0; t < c; ++t) ab[t] /= denom;
      for (int k = 0; k < L; ++k) {
        double v = 0;
        for (int t = 0; t < c; ++t) v += ab[t] * signatures[t][k];
        out.hr.at(k, y, x) = v;
      }
    }
  }

  // PAN: fixed positive band weights, normalized to sum 1.
  out.alpha_true.resize(L);
  double wsum = 0;
  for (int k = 0; k < L; ++k) {
    out.alpha_true[k] =
        0.6 + 0.4 * std::sin(std::numbers::pi * (k + 0.5) / L);
    wsum += out.alpha_true[k];
  }
  for (auto& w : out.alpha_true) w /= wsum;

  RasterImage pan(size, size, 1);
  for (std::size_t i = 0; i < pan.pixels(); ++i) {
    double v = 0;
    for (int k = 0; k < L; ++k)
      v += out.alpha_true[k] * out.hr.samples[k * pan.pixels() + i];
    pan.samples[i] = v;
  }

  DegradeConfig dc;
  dc.factor = factor;
  RasterImage lr = mtf_degrade_msi(out.hr, dc);
  out.pair = make_msi_pan_pair(std::move(lr), std::move(pan));
  return out;
}

}  // namespace upsam
