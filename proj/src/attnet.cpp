#include "upsam/attnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "upsam/parallel.hpp"

namespace upsam {

namespace {

constexpr double kLeakySlope = 0.01;
// Numeric guards applied in the forward pass (so analytic gradients and
// finite differences see the same function):
//  - sigmoid outputs are clamped strictly inside (0,1),
//  - break fractions v are kept away from 1 so 1-v stays invertible,
//  - softplus output has a positive floor so 1/beta^2 stays finite.
constexpr double kUClamp = 1e-12;
constexpr double kVCap = 1.0 - 1e-12;
constexpr double kBetaFloor = 1e-8;
constexpr double kReconGuard = 1e-12;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 30) return z;
  if (z < -30) return std::exp(z);
  return std::log1p(std::exp(z));
}

double apply_act(double z, Activation act) {
  switch (act) {
    case Activation::Identity: return z;
    case Activation::LeakyRelu: return z > 0 ? z : kLeakySlope * z;
    case Activation::Sigmoid: return sigmoid(z);
    case Activation::Softplus: return softplus(z);
  }
  return z;
}

}  // namespace

Vector dense_forward(const Matrix& W, const Vector& b, const Vector& x,
                     Activation act) {
  if (W.rows != static_cast<int>(x.size()))
    throw DimensionError("dense layer input size " +
                         std::to_string(x.size()) + " != weight rows " +
                         std::to_string(W.rows));
  if (W.cols != static_cast<int>(b.size()))
    throw DimensionError("dense layer bias size " + std::to_string(b.size()) +
                         " != weight cols " + std::to_string(W.cols));
  Vector y(W.cols);
  for (int j = 0; j < W.cols; ++j) {
    double acc = b[j];
    for (int i = 0; i < W.rows; ++i) acc += W(i, j) * x[i];
    y[j] = apply_act(acc, act);
  }
  return y;
}

namespace {

// Core stick construction over already-validated inputs.  Fills v (with
// the closure v[c-1] = 1), w = (1-u)^(1/beta) for the free pieces, and
// clamp flags; returns s.
Vector stick_core(const Vector& u, double beta, Vector* v_out, Vector* w_out,
                  std::vector<char>* clamped_out) {
  const int c = static_cast<int>(u.size());
  Vector v(c), w(c, 0.0), s(c);
  std::vector<char> clamped(c, 0);
  for (int j = 0; j < c - 1; ++j) {
    w[j] = std::exp(std::log1p(-u[j]) / beta);
    double vj = 1.0 - w[j];
    if (vj > kVCap) {
      vj = kVCap;
      clamped[j] = 1;
    }
    v[j] = vj;
  }
  if (c > 0) v[c - 1] = 1.0;  // closure: final piece takes the remainder
  double rem = 1.0;
  for (int j = 0; j < c; ++j) {
    s[j] = v[j] * rem;
    rem *= 1.0 - v[j];
  }
  if (v_out) *v_out = std::move(v);
  if (w_out) *w_out = std::move(w);
  if (clamped_out) *clamped_out = std::move(clamped);
  return s;
}

}  // namespace

Vector stick_break(const Vector& u, double beta) {
  if (u.empty()) throw DomainError("stick_break needs at least one piece");
  if (!(beta > 0))
    throw DomainError("stick_break beta must be positive, got " +
                      std::to_string(beta));
  for (std::size_t j = 0; j < u.size(); ++j)
    if (!(u[j] > 0.0) || !(u[j] < 1.0))
      throw DomainError("stick_break u[" + std::to_string(j) +
                        "] outside (0,1): " + std::to_string(u[j]));
  return stick_core(u, beta, nullptr, nullptr, nullptr);
}

double entropy(const Vector& s, double eps) {
  double total = 0;
  for (double x : s) total += std::abs(x) + eps;
  if (!(total > 0)) return 0;
  double h = 0;
  for (double x : s) {
    const double p = (std::abs(x) + eps) / total;
    h -= p * std::log(p);
  }
  return h;
}

NetworkConfig NetworkConfig::defaults(int bands) {
  NetworkConfig cfg;
  cfg.L = bands;
  cfg.decoder = {10, bands};
  return cfg;
}

void validate_config(const NetworkConfig& cfg) {
  if (cfg.L < 1) throw ConfigError("network input band count must be >= 1");
  if (cfg.c1 < 1 || cfg.c2 < 1)
    throw ConfigError("stick piece counts must be >= 1");
  if (cfg.c2 > cfg.c1)
    throw ConfigError("second-stage piece count c2=" + std::to_string(cfg.c2) +
                      " must not exceed c1=" + std::to_string(cfg.c1));
  if (cfg.lambda < 0) throw ConfigError("lambda must be >= 0");
  if (!(cfg.eps > 0)) throw ConfigError("entropy eps must be > 0");
  if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("learning rate must be > 0");
  if (cfg.log_every < 1) throw ConfigError("log_every must be >= 1");
  for (int w : cfg.dense1)
    if (w < 1) throw ConfigError("dense1 widths must be >= 1");
  for (int w : cfg.dense2)
    if (w < 1) throw ConfigError("dense2 widths must be >= 1");
  if (cfg.dense1.empty() || cfg.dense2.empty())
    throw ConfigError("dense blocks need at least one layer");
  if (cfg.decoder.empty()) throw ConfigError("decoder needs at least 1 layer");
  if (cfg.decoder.back() != cfg.L)
    throw ConfigError("decoder output width " +
                      std::to_string(cfg.decoder.back()) +
                      " must equal band count " + std::to_string(cfg.L));
  for (int w : cfg.decoder)
    if (w < 1) throw ConfigError("decoder widths must be >= 1");
}

namespace {

NetworkParams make_params_shaped(const NetworkConfig& cfg) {
  NetworkParams p;
  int cat = cfg.L;
  for (int w : cfg.dense1) {
    p.block1.push_back({Matrix(cat, w), Vector(w, 0.0)});
    cat += w;
  }
  p.u1_head = {Matrix(cat, cfg.c1), Vector(cfg.c1, 0.0)};
  p.beta1_head = {Matrix(cat, 1), Vector(1, 0.0)};
  cat = cfg.c1;
  for (int w : cfg.dense2) {
    p.block2.push_back({Matrix(cat, w), Vector(w, 0.0)});
    cat += w;
  }
  p.u2_head = {Matrix(cat, cfg.c2), Vector(cfg.c2, 0.0)};
  p.beta2_head = {Matrix(cat, 1), Vector(1, 0.0)};
  int in = cfg.c2;
  for (int w : cfg.decoder) {
    p.decoder.emplace_back(in, w);
    in = w;
  }
  return p;
}

void glorot_fill(Matrix& W, std::mt19937_64& rng) {
  const double lim = std::sqrt(6.0 / (W.rows + W.cols));
  std::uniform_real_distribution<double> dist(-lim, lim);
  for (auto& x : W.v) x = dist(rng);
}

}  // namespace

NetworkParams init_params(const NetworkConfig& cfg, std::mt19937_64& rng) {
  validate_config(cfg);
  NetworkParams p = make_params_shaped(cfg);
  for (auto& l : p.block1) glorot_fill(l.W, rng);
  glorot_fill(p.u1_head.W, rng);
  glorot_fill(p.beta1_head.W, rng);
  for (auto& l : p.block2) glorot_fill(l.W, rng);
  glorot_fill(p.u2_head.W, rng);
  glorot_fill(p.beta2_head.W, rng);
  for (auto& W : p.decoder) glorot_fill(W, rng);
  return p;
}

NetworkParams zero_like(const NetworkParams& p) {
  NetworkParams z = p;
  for_each_param(z, [](double& x) { x = 0.0; });
  return z;
}

void for_each_param(NetworkParams& p, const std::function<void(double&)>& f) {
  auto layer = [&](DenseLayer& l) {
    for (auto& x : l.W.v) f(x);
    for (auto& x : l.b) f(x);
  };
  for (auto& l : p.block1) layer(l);
  layer(p.u1_head);
  layer(p.beta1_head);
  for (auto& l : p.block2) layer(l);
  layer(p.u2_head);
  layer(p.beta2_head);
  for (auto& W : p.decoder)
    for (auto& x : W.v) f(x);
}

void for_each_param(const NetworkParams& p,
                    const std::function<void(double)>& f) {
  for_each_param(const_cast<NetworkParams&>(p),
                 [&](double& x) { f(x); });
}

std::size_t param_count(const NetworkParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](double) { ++n; });
  return n;
}

namespace {

struct StageTrace {
  Vector cat;                  // input ++ every layer output
  std::vector<Vector> z;       // dense pre-activations
  Vector u;                    // clamped sigmoid head outputs (length c)
  std::vector<char> u_clamped;
  double beta_pre = 0;
  double beta = 0;
  bool beta_floored = false;
  Vector v, w, s;
  std::vector<char> v_clamped;
};

struct ForwardTrace {
  StageTrace st1, st2;
  std::vector<Vector> dec;     // decoder layer outputs; back() == spectrum
  double recon = 0;            // guarded l2 residual norm
  double sparsity = 0;         // entropy of st2.s
  double ent_T = 0;            // sum (s_j + eps)
  Vector ent_logp;             // log shat_j
  double min_abs_preact = std::numeric_limits<double>::infinity();
};

void check_finite(const Vector& v, const char* where) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value in ") + where);
}

void run_stage(const std::vector<DenseLayer>& block, const DenseLayer& u_head,
               const DenseLayer& beta_head, const Vector& input,
               StageTrace& st, double* min_abs_preact) {
  if (!block.empty() &&
      block.front().W.rows != static_cast<int>(input.size()))
    throw DimensionError("stage input size " + std::to_string(input.size()) +
                         " != first layer rows " +
                         std::to_string(block.front().W.rows));
  st.cat = input;
  for (const auto& l : block) {
    Vector z(l.W.cols);
    for (int j = 0; j < l.W.cols; ++j) {
      double acc = l.b[j];
      for (int i = 0; i < l.W.rows; ++i) acc += l.W(i, j) * st.cat[i];
      z[j] = acc;
      if (min_abs_preact)
        *min_abs_preact = std::min(*min_abs_preact, std::abs(acc));
    }
    st.z.push_back(z);
    for (double zj : z) st.cat.push_back(zj > 0 ? zj : kLeakySlope * zj);
  }

  if (u_head.W.rows != static_cast<int>(st.cat.size()) ||
      beta_head.W.rows != static_cast<int>(st.cat.size()))
    throw DimensionError("head input size does not match dense block output");
  const int c = u_head.W.cols;
  st.u.resize(c);
  st.u_clamped.assign(c, 0);
  for (int j = 0; j < c; ++j) {
    double acc = u_head.b[j];
    for (int i = 0; i < u_head.W.rows; ++i)
      acc += u_head.W(i, j) * st.cat[i];
    double uj = sigmoid(acc);
    if (uj < kUClamp) {
      uj = kUClamp;
      st.u_clamped[j] = 1;
    } else if (uj > 1.0 - kUClamp) {
      uj = 1.0 - kUClamp;
      st.u_clamped[j] = 1;
    }
    st.u[j] = uj;
  }
  double bacc = beta_head.b[0];
  for (int i = 0; i < beta_head.W.rows; ++i)
    bacc += beta_head.W(i, 0) * st.cat[i];
  st.beta_pre = bacc;
  st.beta = softplus(bacc);
  if (st.beta < kBetaFloor) {
    st.beta = kBetaFloor;
    st.beta_floored = true;
  }
  st.s = stick_core(st.u, st.beta, &st.v, &st.w, &st.v_clamped);
}

ForwardTrace forward_trace(const NetworkParams& p, const Vector& pixel,
                           double eps) {
  ForwardTrace t;
  run_stage(p.block1, p.u1_head, p.beta1_head, pixel, t.st1,
            &t.min_abs_preact);
  run_stage(p.block2, p.u2_head, p.beta2_head, t.st1.s, t.st2,
            &t.min_abs_preact);

  const Vector* y = &t.st2.s;
  for (const auto& W : p.decoder) {
    if (W.rows != static_cast<int>(y->size()))
      throw DimensionError("decoder input size " + std::to_string(y->size()) +
                           " != weight rows " + std::to_string(W.rows));
    Vector out(W.cols);
    for (int j = 0; j < W.cols; ++j) {
      double acc = 0;
      for (int i = 0; i < W.rows; ++i) acc += W(i, j) * (*y)[i];
      out[j] = acc;
    }
    t.dec.push_back(std::move(out));
    y = &t.dec.back();
  }

  // Guarded residual norm and entropy intermediates.
  if (t.dec.back().size() != pixel.size())
    throw DimensionError("decoder output size does not match pixel size");
  double sse = 0;
  for (std::size_t k = 0; k < pixel.size(); ++k) {
    const double e = t.dec.back()[k] - pixel[k];
    sse += e * e;
  }
  t.recon = std::sqrt(sse + kReconGuard);

  const Vector& s = t.st2.s;
  t.ent_T = 0;
  for (double x : s) t.ent_T += x + eps;  // s >= 0 by construction
  t.ent_logp.resize(s.size());
  t.sparsity = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double lp = std::log((s[j] + eps) / t.ent_T);
    t.ent_logp[j] = lp;
    t.sparsity -= (s[j] + eps) / t.ent_T * lp;
  }
  return t;
}

// Backward through one attention stage.  `ds` is dLoss/ds for this
// stage's stick output; returns dLoss/d(stage input) and accumulates
// parameter gradients.
Vector stage_backward(const std::vector<DenseLayer>& block,
                      const DenseLayer& u_head, const DenseLayer& beta_head,
                      const StageTrace& st, const Vector& ds, int input_len,
                      std::vector<DenseLayer>& g_block, DenseLayer& g_u,
                      DenseLayer& g_beta) {
  const int c = static_cast<int>(st.s.size());

  // Stick-break backward.  With R_j = prod_{o<j}(1-v_o):
  //   dL/dv_i = ds_i R_i - (sum_{j>i} ds_j s_j) / (1 - v_i)
  // and 1 - v_i == w_i for the unclamped pieces.
  Vector R(c, 1.0);
  for (int j = 1; j < c; ++j) R[j] = R[j - 1] * (1.0 - st.v[j - 1]);
  Vector suffix(c + 1, 0.0);
  for (int j = c - 1; j >= 0; --j)
    suffix[j] = suffix[j + 1] + ds[j] * st.s[j];

  Vector du(c, 0.0);
  double dbeta = 0;
  for (int i = 0; i < c - 1; ++i) {  // v[c-1] is the fixed closure piece
    if (st.v_clamped[i]) continue;   // clamp is flat: no gradient flows
    const double dv = ds[i] * R[i] - suffix[i + 1] / st.w[i];
    const double one_mu = 1.0 - st.u[i];
    du[i] = dv * st.w[i] / (one_mu * st.beta);
    dbeta += dv * st.w[i] * std::log1p(-st.u[i]) / (st.beta * st.beta);
  }
  if (st.beta_floored) dbeta = 0;

  // Heads.
  Vector dcat(st.cat.size(), 0.0);
  for (int j = 0; j < c; ++j) {
    if (st.u_clamped[j] || du[j] == 0.0) continue;
    const double dupre = du[j] * st.u[j] * (1.0 - st.u[j]);
    for (int i = 0; i < u_head.W.rows; ++i) {
      g_u.W(i, j) += st.cat[i] * dupre;
      dcat[i] += u_head.W(i, j) * dupre;
    }
    g_u.b[j] += dupre;
  }
  const double dbpre = st.beta_floored ? 0.0 : dbeta * sigmoid(st.beta_pre);
  if (dbpre != 0.0) {
    for (int i = 0; i < beta_head.W.rows; ++i) {
      g_beta.W(i, 0) += st.cat[i] * dbpre;
      dcat[i] += beta_head.W(i, 0) * dbpre;
    }
    g_beta.b[0] += dbpre;
  }

  // Dense block, last layer first; layer i consumed cat[0..off_i).
  int off = static_cast<int>(st.cat.size());
  for (int li = static_cast<int>(block.size()) - 1; li >= 0; --li) {
    const auto& l = block[li];
    off -= l.W.cols;
    for (int j = 0; j < l.W.cols; ++j) {
      const double zj = st.z[li][j];
      const double dz = dcat[off + j] * (zj > 0 ? 1.0 : kLeakySlope);
      if (dz == 0.0) continue;
      for (int i = 0; i < off; ++i) {
        g_block[li].W(i, j) += st.cat[i] * dz;
        dcat[i] += l.W(i, j) * dz;
      }
      g_block[li].b[j] += dz;
    }
  }
  return Vector(dcat.begin(), dcat.begin() + input_len);
}

// Forward + backward for one pixel; adds this pixel's parameter gradient
// into `grad` and returns the loss parts.
LossParts accumulate_pixel(const NetworkParams& p, const Vector& pixel,
                           double lambda, double eps, NetworkParams& grad) {
  ForwardTrace t = forward_trace(p, pixel, eps);

  // d(recon)/d(spectrum) for the guarded l2 norm.
  const Vector& xhat = t.dec.back();
  Vector dy(xhat.size());
  for (std::size_t k = 0; k < xhat.size(); ++k)
    dy[k] = (xhat[k] - pixel[k]) / t.recon;

  // Decoder (identity activations, no bias).
  for (int k = static_cast<int>(p.decoder.size()) - 1; k >= 0; --k) {
    const Matrix& W = p.decoder[k];
    const Vector& src = k == 0 ? t.st2.s : t.dec[k - 1];
    Vector dprev(W.rows, 0.0);
    for (int j = 0; j < W.cols; ++j) {
      const double d = dy[j];
      if (d == 0.0) continue;
      for (int i = 0; i < W.rows; ++i) {
        grad.decoder[k](i, j) += src[i] * d;
        dprev[i] += W(i, j) * d;
      }
    }
    dy = std::move(dprev);
  }

  // Entropy term: dH/ds_j = (-log shat_j - H) / T.
  Vector ds2 = dy;
  if (lambda != 0) {
    for (std::size_t j = 0; j < ds2.size(); ++j)
      ds2[j] += lambda * (-t.ent_logp[j] - t.sparsity) / t.ent_T;
  }

  const int c1_in = p.block2.empty() ? static_cast<int>(t.st1.s.size())
                                     : p.block2.front().W.rows;
  Vector ds1 = stage_backward(p.block2, p.u2_head, p.beta2_head, t.st2, ds2,
                              c1_in, grad.block2, grad.u2_head,
                              grad.beta2_head);
  const int in0 = p.block1.empty() ? static_cast<int>(pixel.size())
                                   : p.block1.front().W.rows;
  stage_backward(p.block1, p.u1_head, p.beta1_head, t.st1, ds1, in0,
                 grad.block1, grad.u1_head, grad.beta1_head);

  LossParts parts;
  parts.recon = t.recon;
  parts.sparsity = t.sparsity;
  parts.total = t.recon + lambda * t.sparsity;
  return parts;
}

Vector flatten(const NetworkParams& p) {
  Vector out;
  out.reserve(param_count(p));
  for_each_param(p, [&](double x) { out.push_back(x); });
  return out;
}

void unflatten(const Vector& flat, NetworkParams& p) {
  std::size_t i = 0;
  for_each_param(p, [&](double& x) { x = flat[i++]; });
}

}  // namespace

Vector encode(const NetworkParams& p, const Vector& pixel) {
  ForwardTrace t = forward_trace(p, pixel, 1e-9);
  check_finite(t.st1.s, "stage-1 attention output");
  check_finite(t.st2.s, "stage-2 attention output");
  return t.st2.s;
}

Vector decode(const NetworkParams& p, const Vector& s) {
  Vector y = s;
  for (const auto& W : p.decoder) {
    if (W.rows != static_cast<int>(y.size()))
      throw DimensionError("decoder input size " + std::to_string(y.size()) +
                           " != weight rows " + std::to_string(W.rows));
    Vector out(W.cols, 0.0);
    for (int j = 0; j < W.cols; ++j) {
      double acc = 0;
      for (int i = 0; i < W.rows; ++i) acc += W(i, j) * y[i];
      out[j] = acc;
    }
    y = std::move(out);
  }
  return y;
}

LossParts loss(const NetworkParams& p, const Vector& pixel, double lambda,
               double eps) {
  ForwardTrace t = forward_trace(p, pixel, eps);
  LossParts parts;
  parts.recon = t.recon;
  parts.sparsity = t.sparsity;
  parts.total = t.recon + lambda * t.sparsity;
  return parts;
}

NetworkParams gradients(const NetworkParams& p,
                        const std::vector<Vector>& batch, double lambda,
                        double eps) {
  if (batch.empty()) throw DomainError("gradient batch is empty");
  NetworkParams grad = zero_like(p);
  for (const auto& px : batch) accumulate_pixel(p, px, lambda, eps, grad);
  const double inv = 1.0 / static_cast<double>(batch.size());
  bool finite = true;
  for_each_param(grad, [&](double& x) {
    x *= inv;
    if (!std::isfinite(x)) finite = false;
  });
  if (!finite) throw NumericError("non-finite gradient component");
  return grad;
}

SmoothnessProbe probe_smoothness(const NetworkParams& p, const Vector& pixel) {
  ForwardTrace t = forward_trace(p, pixel, 1e-9);
  SmoothnessProbe probe;
  probe.min_abs_preact = t.min_abs_preact;
  auto any = [](const std::vector<char>& f) {
    return std::any_of(f.begin(), f.end(), [](char c) { return c != 0; });
  };
  probe.guard_hit = any(t.st1.u_clamped) || any(t.st1.v_clamped) ||
                    t.st1.beta_floored || any(t.st2.u_clamped) ||
                    any(t.st2.v_clamped) || t.st2.beta_floored;
  return probe;
}

TrainedModel train(const RasterImage& msi, const NetworkConfig& cfg) {
  validate_config(cfg);
  if (msi.bands != cfg.L)
    throw DimensionError("image has " + std::to_string(msi.bands) +
                         " bands but config expects " + std::to_string(cfg.L));
  const std::size_t npix = msi.pixels();
  if (npix == 0) throw DomainError("cannot train on an empty image");

  std::vector<Vector> pixels(npix, Vector(cfg.L));
  for (std::size_t pidx = 0; pidx < npix; ++pidx)
    for (int b = 0; b < cfg.L; ++b)
      pixels[pidx][b] = msi.samples[static_cast<std::size_t>(b) * npix + pidx];

  std::mt19937_64 rng(cfg.seed);
  NetworkParams params = init_params(cfg, rng);

  Vector theta = flatten(params);
  Vector m(theta.size(), 0.0), v(theta.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  std::vector<std::size_t> perm(npix);
  std::iota(perm.begin(), perm.end(), 0);
  const std::size_t bn = std::min<std::size_t>(cfg.batch, npix);
  std::size_t cursor = npix;  // force an initial shuffle

  TrainedModel model;
  model.config = cfg;
  std::vector<Vector> batch(bn);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (cursor + bn > npix) {
      std::shuffle(perm.begin(), perm.end(), rng);
      cursor = 0;
    }
    for (std::size_t i = 0; i < bn; ++i) batch[i] = pixels[perm[cursor + i]];
    cursor += bn;

    NetworkParams grad = zero_like(params);
    double recon_sum = 0, sparsity_sum = 0;
    for (const auto& px : batch) {
      const LossParts parts =
          accumulate_pixel(params, px, cfg.lambda, cfg.eps, grad);
      recon_sum += parts.recon;
      sparsity_sum += parts.sparsity;
    }
    const double inv = 1.0 / static_cast<double>(bn);
    const double recon_mean = recon_sum * inv;
    const double sparsity_mean = sparsity_sum * inv;
    if (!std::isfinite(recon_mean + cfg.lambda * sparsity_mean))
      throw TrainingError("training diverged (non-finite loss) at iteration " +
                              std::to_string(iter),
                          iter);
    if (iter % cfg.log_every == 0 || iter == cfg.iterations - 1)
      model.loss_history.push_back({iter, recon_mean, sparsity_mean});

    Vector g = flatten(grad);
    const double t = static_cast<double>(iter + 1);
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);
    bool finite = true;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k] * inv;
      if (!std::isfinite(gk)) finite = false;
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * gk;
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * gk * gk;
      theta[k] -= cfg.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kAdamEps);
    }
    if (!finite)
      throw TrainingError("non-finite gradient at iteration " +
                              std::to_string(iter),
                          iter);
    unflatten(theta, params);
  }

  model.params = std::move(params);
  return model;
}

AttentionStack encode_image(const TrainedModel& model,
                            const RasterImage& msi) {
  const NetworkConfig& cfg = model.config;
  if (msi.bands != cfg.L)
    throw DimensionError("image has " + std::to_string(msi.bands) +
                         " bands but model expects " + std::to_string(cfg.L));
  AttentionStack stack(msi.width, msi.height, cfg.c2);
  const std::size_t npix = msi.pixels();
  parallel_for(static_cast<std::int64_t>(npix),
               [&](std::int64_t lo, std::int64_t hi) {
                 Vector px(cfg.L);
                 for (std::int64_t i = lo; i < hi; ++i) {
                   for (int b = 0; b < cfg.L; ++b)
                     px[b] = msi.samples[static_cast<std::size_t>(b) * npix +
                                         i];
                   const Vector s = encode(model.params, px);
                   for (int j = 0; j < cfg.c2; ++j)
                     stack.data[static_cast<std::size_t>(j) * npix + i] = s[j];
                 }
               });
  return stack;
}

RasterImage decode_image(const TrainedModel& model, const AttentionStack& s) {
  const NetworkConfig& cfg = model.config;
  if (s.maps != cfg.c2)
    throw DimensionError("stack has " + std::to_string(s.maps) +
                         " maps but model expects " + std::to_string(cfg.c2));
  RasterImage out(s.width, s.height, cfg.L);
  const std::size_t npix = s.pixels();
  parallel_for(static_cast<std::int64_t>(npix),
               [&](std::int64_t lo, std::int64_t hi) {
                 Vector sv(cfg.c2);
                 for (std::int64_t i = lo; i < hi; ++i) {
                   for (int j = 0; j < cfg.c2; ++j)
                     sv[j] = s.data[static_cast<std::size_t>(j) * npix + i];
                   const Vector spec = decode(model.params, sv);
                   for (int b = 0; b < cfg.L; ++b)
                     out.samples[static_cast<std::size_t>(b) * npix + i] =
                         spec[b];
                 }
               });
  return out;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json config_to_json(const NetworkConfig& cfg) {
  ordered_json j;
  j["L"] = cfg.L;
  j["dense1"] = cfg.dense1;
  j["c1"] = cfg.c1;
  j["dense2"] = cfg.dense2;
  j["c2"] = cfg.c2;
  j["decoder"] = cfg.decoder;
  j["lambda"] = cfg.lambda;
  j["eps"] = cfg.eps;
  j["iterations"] = cfg.iterations;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["seed"] = cfg.seed;
  j["log_every"] = cfg.log_every;
  return j;
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.L = j.at("L").get<int>();
  cfg.dense1 = j.at("dense1").get<std::vector<int>>();
  cfg.c1 = j.at("c1").get<int>();
  cfg.dense2 = j.at("dense2").get<std::vector<int>>();
  cfg.c2 = j.at("c2").get<int>();
  cfg.decoder = j.at("decoder").get<std::vector<int>>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.iterations = j.at("iterations").get<int>();
  cfg.batch = j.at("batch").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.log_every = j.at("log_every").get<int>();
  return cfg;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  const std::string stem = raster_stem(path);
  const std::size_t count = param_count(model.params);

  ordered_json j;
  j["schema"] = 1;
  j["kind"] = "upsam-model";
  j["config"] = config_to_json(model.config);
  ordered_json hist = ordered_json::array();
  for (const auto& e : model.loss_history) {
    ordered_json h;
    h["iteration"] = e.iteration;
    h["recon"] = e.recon;
    h["sparsity"] = e.sparsity;
    hist.push_back(h);
  }
  j["loss_history"] = hist;
  j["param_count"] = count;

  {
    std::ofstream out(stem + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model manifest: " + stem + ".json");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed on model manifest");
  }

  std::vector<unsigned char> raw;
  raw.reserve(count * 4);
  for_each_param(model.params, [&](double x) {
    const std::uint32_t bits =
        std::bit_cast<std::uint32_t>(static_cast<float>(x));
    raw.push_back(static_cast<unsigned char>(bits & 0xff));
    raw.push_back(static_cast<unsigned char>(bits >> 8 & 0xff));
    raw.push_back(static_cast<unsigned char>(bits >> 16 & 0xff));
    raw.push_back(static_cast<unsigned char>(bits >> 24 & 0xff));
  });
  std::ofstream out(stem + ".f32", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model blob: " + stem + ".f32");
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed on model blob");
}

TrainedModel load_model(const std::string& path) {
  const std::string stem = raster_stem(path);
  std::ifstream in(stem + ".json", std::ios::binary);
  if (!in) throw IoError("cannot open model manifest: " + stem + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed model manifest: " + std::string(e.what()));
  }
  TrainedModel model;
  try {
    if (j.at("kind").get<std::string>() != "upsam-model")
      throw FormatError("not a model manifest: " + stem + ".json");
    model.config = config_from_json(j.at("config"));
    for (const auto& h : j.at("loss_history")) {
      LossLogEntry e;
      e.iteration = h.at("iteration").get<int>();
      e.recon = h.at("recon").get<double>();
      e.sparsity = h.at("sparsity").get<double>();
      model.loss_history.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model manifest missing fields: " +
                      std::string(e.what()));
  }
  validate_config(model.config);
  model.params = make_params_shaped(model.config);
  const std::size_t count = param_count(model.params);
  if (j.contains("param_count") &&
      j.at("param_count").get<std::size_t>() != count)
    throw FormatError("model manifest parameter count does not match config");

  std::ifstream blob(stem + ".f32", std::ios::binary | std::ios::ate);
  if (!blob) throw IoError("cannot open model blob: " + stem + ".f32");
  const auto actual = static_cast<std::size_t>(blob.tellg());
  if (actual != count * 4)
    throw FormatError("model blob size " + std::to_string(actual) +
                      " != expected " + std::to_string(count * 4));
  blob.seekg(0);
  std::vector<unsigned char> raw(actual);
  if (actual && !blob.read(reinterpret_cast<char*>(raw.data()),
                           static_cast<std::streamsize>(actual)))
    throw IoError("short read on model blob");
  std::size_t i = 0;
  for_each_param(model.params, [&](double& x) {
    const unsigned char* b = raw.data() + 4 * i++;
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               static_cast<std::uint32_t>(b[1]) << 8 |
                               static_cast<std::uint32_t>(b[2]) << 16 |
                               static_cast<std::uint32_t>(b[3]) << 24;
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f))
      throw FormatError("non-finite parameter in model blob");
    x = static_cast<double>(f);
  });
  return model;
}

}  // namespace upsam
