#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "upsam/raster.hpp"

namespace upsam {

// Dense row-major matrix, rows = input dim, cols = output dim, so a layer
// computes y = act(W^T x + b).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c),
                         v(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
};

using Vector = std::vector<double>;

enum class Activation { Identity, LeakyRelu, Sigmoid, Softplus };

// y = act(W^T x + b); throws DimensionError when shapes disagree.
Vector dense_forward(const Matrix& W, const Vector& b, const Vector& x,
                     Activation act);

// Truncated stick-breaking: v_j = 1 - (1-u_j)^(1/beta) for j < c, with the
// closure v_c = 1, then s_1 = v_1 and s_j = v_j * prod_{o<j} (1 - v_o).
// The result is a point on the simplex: s_j >= 0, sum_j s_j == 1.
Vector stick_break(const Vector& u, double beta);

// Entropy of the perturbed, renormalized vector
// shat_j = (|s_j| + eps) / sum_k (|s_k| + eps).
double entropy(const Vector& s, double eps = 1e-9);

// Two stacked attention stages (dense block + u/beta heads + stick break)
// followed by a bias-free linear decoder.
struct NetworkConfig {
  int L = 0;                       // input band count
  std::vector<int> dense1 = {3, 3, 3};
  int c1 = 20;                     // stage-1 stick pieces
  std::vector<int> dense2 = {3, 3, 3};
  int c2 = 10;                     // stage-2 pieces == attention map count
  std::vector<int> decoder;        // defaults to {10, L}
  double lambda = 0.001;           // entropy weight
  double eps = 1e-9;               // entropy perturbation
  int iterations = 2000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int log_every = 50;

  static NetworkConfig defaults(int bands);
};

// Throws ConfigError on inconsistent settings (c2 > c1, negative lambda,
// decoder not ending in L, ...).
void validate_config(const NetworkConfig& cfg);

struct DenseLayer {
  Matrix W;
  Vector b;
};

struct NetworkParams {
  std::vector<DenseLayer> block1;
  DenseLayer u1_head;     // cols == c1, sigmoid
  DenseLayer beta1_head;  // cols == 1, softplus
  std::vector<DenseLayer> block2;
  DenseLayer u2_head;     // cols == c2
  DenseLayer beta2_head;
  std::vector<Matrix> decoder;  // bias-free, identity activation
};

// Glorot-uniform weights, zero biases; layer shapes from cfg.
NetworkParams init_params(const NetworkConfig& cfg, std::mt19937_64& rng);
NetworkParams zero_like(const NetworkParams& p);
std::size_t param_count(const NetworkParams& p);

// Visits every parameter in a fixed order (block1 W,b per layer; u1 W,b;
// beta1 W,b; block2; u2; beta2; decoder matrices).  This order defines
// both the optimizer state layout and the serialized blob layout.
void for_each_param(NetworkParams& p, const std::function<void(double&)>& f);
void for_each_param(const NetworkParams& p,
                    const std::function<void(double)>& f);

// Full encoder pass: dense1 -> (u1, beta1) -> stick -> dense2 ->
// (u2, beta2) -> stick.  Output is on the c2-simplex.
Vector encode(const NetworkParams& p, const Vector& pixel);

// Decoder only: spectrum = W2^T (W1^T s); linear, no bias.
Vector decode(const NetworkParams& p, const Vector& s);

struct LossParts {
  double total = 0;
  double recon = 0;     // unsquared l2 norm of the residual
  double sparsity = 0;  // entropy of the attention vector
};

LossParts loss(const NetworkParams& p, const Vector& pixel, double lambda,
               double eps = 1e-9);

// Analytic gradient of the mean loss over the batch, in parameter shape.
NetworkParams gradients(const NetworkParams& p,
                        const std::vector<Vector>& batch, double lambda,
                        double eps = 1e-9);

// Forward-pass smoothness diagnostics: the smallest |pre-activation|
// across the leaky-relu units plus whether any numeric guard (sigmoid
// clamp, stick clamp, softplus floor) fired.  Callers doing
// finite-difference probes can reject draws sitting on a kink.
struct SmoothnessProbe {
  double min_abs_preact = 0;
  bool guard_hit = false;
};
SmoothnessProbe probe_smoothness(const NetworkParams& p, const Vector& pixel);

struct LossLogEntry {
  int iteration = 0;
  double recon = 0;
  double sparsity = 0;
};

struct TrainedModel {
  NetworkConfig config;
  NetworkParams params;
  std::vector<LossLogEntry> loss_history;
};

// Per-pixel attention vectors stored as `maps` planes.
struct AttentionStack {
  int width = 0;
  int height = 0;
  int maps = 0;
  std::vector<double> data;  // map-sequential, row-major

  AttentionStack() = default;
  AttentionStack(int w, int h, int m)
      : width(w), height(h), maps(m),
        data(static_cast<std::size_t>(w) * h * m, 0.0) {}
  std::size_t pixels() const {
    return static_cast<std::size_t>(width) * height;
  }
  double& at(int map, int y, int x) {
    return data[(static_cast<std::size_t>(map) * height + y) * width + x];
  }
  double at(int map, int y, int x) const {
    return data[(static_cast<std::size_t>(map) * height + y) * width + x];
  }
  const double* map_data(int map) const {
    return data.data() + static_cast<std::size_t>(map) * pixels();
  }
  double* map_data(int map) {
    return data.data() + static_cast<std::size_t>(map) * pixels();
  }
};

// Per-image unsupervised training: Adam over shuffled pixel minibatches.
// Deterministic for a fixed seed on one platform.
TrainedModel train(const RasterImage& msi, const NetworkConfig& cfg);

AttentionStack encode_image(const TrainedModel& model, const RasterImage& msi);
RasterImage decode_image(const TrainedModel& model, const AttentionStack& s);

// Serialization: `<stem>.json` manifest (config, loss history, layer
// layout) + `<stem>.f32` parameter blob in for_each_param order.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace upsam
