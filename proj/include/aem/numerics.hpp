#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aem/kernels.hpp"
#include "aem/matrix.hpp"
#include "aem/rng.hpp"

namespace aem {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kSigmoidFloor = 1e-7;  // outputs live in [floor, 1-floor]
inline constexpr double kDefaultLeakySlope = 0.1;
inline constexpr double kSpectralSigmaFloor = 1e-12;

enum class NormMode { kTraining, kInference };

// ---------------------------------------------------------------------------
// Dense layer, optionally spectrally normalized.
//
// Forward always multiplies by weight_view(): the raw W, or W / sigma_hat
// when spectral normalization is on. sigma_hat comes from power iteration
// with a persistent left vector u; refresh with spectral_normalize() before
// using the view. Gradients flowing to a normalized layer are mapped back to
// raw W including the rank-1 dependence of sigma_hat on W.
// ---------------------------------------------------------------------------
struct DenseLayer {
  Matrix W;  // out x in
  std::vector<double> b;
  Matrix grad_W;
  std::vector<double> grad_b;

  bool spectral = false;
  std::vector<double> sn_u;  // persistent, length out
  std::vector<double> sn_v;  // from the last refresh, length in
  double sn_sigma = 1.0;
  Matrix W_normed;  // cached W / sigma_hat

  std::size_t out_dim() const { return W.rows; }
  std::size_t in_dim() const { return W.cols; }
  const Matrix& weight_view() const { return spectral ? W_normed : W; }
  void zero_grad() {
    grad_W.fill(0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
  }
};

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero bias, unit-Gaussian u.
DenseLayer make_dense(std::size_t out, std::size_t in, Rng& rng,
                      bool spectral = false);

// y = x * view(W)^T + b, row per sample.
void dense_forward(const DenseLayer& layer, const Matrix& x, Matrix& y);

// Accumulates grad_W / grad_b from upstream dy (same shape as y); writes the
// input gradient to dx when non-null. x must be the forward input.
void dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& dy,
                    Matrix* dx);

// Maps a gradient taken w.r.t. the normalized weight back to raw W and
// accumulates it into grad_W.
void accumulate_spectral_grad(DenseLayer& layer, const Matrix& grad_normed);

// Runs `iterations` power-iteration updates of (u, v), then caches
// sigma_hat = u^T W v and the normalized view. iterations == 0 reuses the
// stored u (recomputing v and sigma), which keeps the map W -> view(W)
// differentiable for finite-difference checks. Returns sigma_hat.
double spectral_normalize(DenseLayer& layer, int iterations);

// ---------------------------------------------------------------------------
// Normalization layers
// ---------------------------------------------------------------------------
struct LayerNorm {
  std::vector<double> gain, bias;
  std::vector<double> grad_gain, grad_bias;
  double eps = kLayerNormEps;
};

LayerNorm make_layer_norm(std::size_t dim);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;  // per row
};

void layer_norm_forward(const LayerNorm& ln, const Matrix& x, Matrix& y,
                        LayerNormCache* cache);
void layer_norm_backward(LayerNorm& ln, const LayerNormCache& cache,
                         const Matrix& dy, Matrix& dx);

struct BatchNorm {
  std::vector<double> gain, bias;
  std::vector<double> running_mean, running_var;
  std::vector<double> grad_gain, grad_bias;
  double momentum = kBatchNormMomentum;
  double eps = kBatchNormEps;
  long updates = 0;  // training batches folded into the running stats
};

BatchNorm make_batch_norm(std::size_t dim);

struct BatchNormCache {
  Matrix xhat;
  std::vector<double> inv_std;  // per feature
  NormMode mode = NormMode::kTraining;
};

// Training mode normalizes with batch statistics (population variance) and
// folds them into the running stats; it needs at least two rows. Inference
// mode reads only the running stats.
void batch_norm_forward(BatchNorm& bn, const Matrix& x, NormMode mode,
                        Matrix& y, BatchNormCache* cache);
void batch_norm_backward(BatchNorm& bn, const BatchNormCache& cache,
                         const Matrix& dy, Matrix& dx);

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------
void leaky_relu_forward(const Matrix& x, double slope, Matrix& y);
// Subgradient at exactly 0 is the slope.
void leaky_relu_backward(const Matrix& x, double slope, const Matrix& dy,
                         Matrix& dx);
inline double leaky_slope_at(double x, double slope) {
  return x > 0.0 ? 1.0 : slope;
}

// Rows are positive and sum to one; computed with max subtraction.
void softmax_forward(const Matrix& x, Matrix& y);
// dx from upstream dy given the forward output y.
void softmax_backward(const Matrix& y, const Matrix& dy, Matrix& dx);

// Logistic clamped to [kSigmoidFloor, 1 - kSigmoidFloor] so downstream logs
// stay finite. The derivative uses the clamped output.
double sigmoid(double x);
inline double sigmoid_grad(double y) { return y * (1.0 - y); }
inline double sigmoid_grad2(double y) { return y * (1.0 - y) * (1.0 - 2.0 * y); }

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------
struct Adam {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  long rejected = 0;

  struct Slot {
    double* w;
    const double* g;
    std::size_t n;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;

  void attach(double* w, const double* g, std::size_t n);
  void attach(DenseLayer& layer);
  void attach(LayerNorm& ln);
  void attach(BatchNorm& bn);

  // Bias-corrected update over all attached parameters. Returns false (and
  // leaves every parameter and moment untouched) when any gradient is
  // non-finite.
  bool step();
};

// ---------------------------------------------------------------------------
// Dirichlet prior
// ---------------------------------------------------------------------------
struct DirichletPrior {
  std::vector<double> alpha;  // all > 0

  static DirichletPrior uniform(std::size_t dim, double value = 1.0);
  void validate() const;  // throws ConfigError on non-positive entries
};

// Normalized independent Gamma(alpha_t, 1) draws.
void sample_dirichlet(const DirichletPrior& prior, Rng& rng,
                      std::span<double> theta);
Matrix sample_dirichlet_batch(const DirichletPrior& prior, Rng& rng,
                              std::size_t batch);

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------
struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences against a caller-supplied analytic gradient. x is
// perturbed in place and restored. Relative error uses a small floor so
// exact-zero coordinates do not divide by zero.
GradCheckReport check_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<double> x, std::span<const double> analytic, double h = 1e-5);

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------
// Eigenvalues in descending order, eigenvectors as matching columns of V.
void sym_eigen(const Matrix& A, std::vector<double>& eigenvalues, Matrix& V);

// FNV-1a over raw bytes; used for fingerprints throughout.
std::uint64_t fnv1a(const void* bytes, std::size_t n,
                    std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t fnv1a_doubles(std::span<const double> xs,
                            std::uint64_t seed = 1469598103934665603ULL);

}  // namespace aem
