#include "aem/numerics.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>

#include "aem/errors.hpp"

namespace aem {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ContractViolation(msg);
}

}  // namespace

// --------------------------------------------------------------------------
// Dense layer
// --------------------------------------------------------------------------

DenseLayer make_dense(std::size_t out, std::size_t in, Rng& rng, bool spectral) {
  DenseLayer layer;
  layer.W.resize(out, in);
  layer.b.assign(out, 0.0);
  layer.grad_W.resize(out, in);
  layer.grad_b.assign(out, 0.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.W.data) w = (2.0 * rng.uniform() - 1.0) * limit;
  layer.spectral = spectral;
  if (spectral) {
    layer.sn_u.resize(out);
    double norm = 0.0;
    for (double& u : layer.sn_u) {
      u = rng.normal();
      norm += u * u;
    }
    norm = std::sqrt(norm);
    if (norm < kSpectralSigmaFloor) {
      layer.sn_u.assign(out, 0.0);
      layer.sn_u[0] = 1.0;
    } else {
      for (double& u : layer.sn_u) u /= norm;
    }
    layer.sn_v.assign(in, 0.0);
    spectral_normalize(layer, 0);
  }
  return layer;
}

void dense_forward(const DenseLayer& layer, const Matrix& x, Matrix& y) {
  require(x.cols == layer.in_dim(), "dense_forward: input width mismatch");
  gemm_abt(x, layer.weight_view(), y);
  add_row_bias(y, layer.b);
}

void accumulate_spectral_grad(DenseLayer& layer, const Matrix& grad_normed) {
  require(layer.spectral, "accumulate_spectral_grad: layer not spectral");
  // W_normed = W / sigma, sigma = u^T W v  =>
  // dL/dW = (G - <G, W_normed> u v^T) / sigma
  const double sigma = layer.sn_sigma;
  double inner = 0.0;
  for (std::size_t i = 0; i < grad_normed.size(); ++i)
    inner += grad_normed.data[i] * layer.W_normed.data[i];
  for (std::size_t r = 0; r < layer.W.rows; ++r) {
    const double* g = grad_normed[r];
    double* out = layer.grad_W[r];
    const double ur = layer.sn_u[r] * inner;
    for (std::size_t c = 0; c < layer.W.cols; ++c)
      out[c] += (g[c] - ur * layer.sn_v[c]) / sigma;
  }
}

void dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& dy,
                    Matrix* dx) {
  require(x.rows == dy.rows, "dense_backward: batch mismatch");
  require(dy.cols == layer.out_dim(), "dense_backward: output width mismatch");
  if (layer.spectral) {
    Matrix grad_normed(layer.W.rows, layer.W.cols);
    ref::gemm_atb_acc(dy, x, grad_normed);  // dy^T x, out x in
    accumulate_spectral_grad(layer, grad_normed);
  } else {
    gemm_atb_acc(dy, x, layer.grad_W);
  }
  col_sums_acc(dy, layer.grad_b);
  if (dx) gemm_ab(dy, layer.weight_view(), *dx);
}

double spectral_normalize(DenseLayer& layer, int iterations) {
  require(layer.spectral, "spectral_normalize: layer not spectral");
  require(!layer.sn_u.empty(), "spectral_normalize: u not initialized");
  const auto normalize = [](std::vector<double>& v) {
    double n = l2_norm(v);
    if (n < kSpectralSigmaFloor) {
      std::fill(v.begin(), v.end(), 0.0);
      return false;
    }
    for (double& x : v) x /= n;
    return true;
  };

  for (int it = 0; it < iterations; ++it) {
    matvec_t(layer.W, layer.sn_u, layer.sn_v);
    if (!normalize(layer.sn_v)) break;
    matvec(layer.W, layer.sn_v, layer.sn_u);
    if (!normalize(layer.sn_u)) break;
  }
  // Always rebuild v from the current u so sigma is an exact function of
  // (W, u); finite differences on W then see a smooth map.
  matvec_t(layer.W, layer.sn_u, layer.sn_v);
  normalize(layer.sn_v);

  std::vector<double> wv(layer.W.rows, 0.0);
  matvec(layer.W, layer.sn_v, wv);
  double sigma = dot(layer.sn_u, wv);
  if (!(sigma > kSpectralSigmaFloor)) sigma = kSpectralSigmaFloor;
  layer.sn_sigma = sigma;

  layer.W_normed.resize(layer.W.rows, layer.W.cols);
  for (std::size_t i = 0; i < layer.W.size(); ++i)
    layer.W_normed.data[i] = layer.W.data[i] / sigma;
  return sigma;
}

// --------------------------------------------------------------------------
// Layer normalization
// --------------------------------------------------------------------------

LayerNorm make_layer_norm(std::size_t dim) {
  LayerNorm ln;
  ln.gain.assign(dim, 1.0);
  ln.bias.assign(dim, 0.0);
  ln.grad_gain.assign(dim, 0.0);
  ln.grad_bias.assign(dim, 0.0);
  return ln;
}

void layer_norm_forward(const LayerNorm& ln, const Matrix& x, Matrix& y,
                        LayerNormCache* cache) {
  require(x.cols == ln.gain.size(), "layer_norm_forward: width mismatch");
  const std::size_t n = x.cols;
  y.resize(x.rows, n);
  if (cache) {
    cache->xhat.resize(x.rows, n);
    cache->inv_std.assign(x.rows, 0.0);
  }
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* in = x[r];
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + ln.eps);
    double* out = y[r];
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (in[j] - mean) * inv_std;
      out[j] = ln.gain[j] * xh + ln.bias[j];
      if (cache) cache->xhat.at(r, j) = xh;
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
}

void layer_norm_backward(LayerNorm& ln, const LayerNormCache& cache,
                         const Matrix& dy, Matrix& dx) {
  const std::size_t n = dy.cols;
  const double dn = static_cast<double>(n);
  dx.resize(dy.rows, n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double* g = dy[r];
    const double* xh = cache.xhat[r];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dxhat[j] = g[j] * ln.gain[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xh[j];
      ln.grad_gain[j] += g[j] * xh[j];
      ln.grad_bias[j] += g[j];
    }
    const double inv_std = cache.inv_std[r];
    double* out = dx[r];
    for (std::size_t j = 0; j < n; ++j)
      out[j] = inv_std / dn * (dn * dxhat[j] - sum_dxhat - xh[j] * sum_dxhat_xhat);
  }
}

// --------------------------------------------------------------------------
// Batch normalization
// --------------------------------------------------------------------------

BatchNorm make_batch_norm(std::size_t dim) {
  BatchNorm bn;
  bn.gain.assign(dim, 1.0);
  bn.bias.assign(dim, 0.0);
  bn.running_mean.assign(dim, 0.0);
  bn.running_var.assign(dim, 1.0);
  bn.grad_gain.assign(dim, 0.0);
  bn.grad_bias.assign(dim, 0.0);
  return bn;
}

void batch_norm_forward(BatchNorm& bn, const Matrix& x, NormMode mode,
                        Matrix& y, BatchNormCache* cache) {
  require(x.cols == bn.gain.size(), "batch_norm_forward: width mismatch");
  const std::size_t n = x.cols;
  const std::size_t m = x.rows;
  y.resize(m, n);
  if (cache) {
    cache->xhat.resize(m, n);
    cache->inv_std.assign(n, 0.0);
    cache->mode = mode;
  }
  if (mode == NormMode::kTraining) {
    require(m >= 2, "batch_norm_forward: training mode needs a batch of >= 2");
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < m; ++r) mean += x.at(r, j);
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double d = x.at(r, j) - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);  // population variance throughout
      const double inv_std = 1.0 / std::sqrt(var + bn.eps);
      for (std::size_t r = 0; r < m; ++r) {
        const double xh = (x.at(r, j) - mean) * inv_std;
        y.at(r, j) = bn.gain[j] * xh + bn.bias[j];
        if (cache) cache->xhat.at(r, j) = xh;
      }
      if (cache) cache->inv_std[j] = inv_std;
      bn.running_mean[j] = bn.momentum * bn.running_mean[j] + (1.0 - bn.momentum) * mean;
      bn.running_var[j] = bn.momentum * bn.running_var[j] + (1.0 - bn.momentum) * var;
    }
    bn.updates += 1;
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double inv_std = 1.0 / std::sqrt(bn.running_var[j] + bn.eps);
      for (std::size_t r = 0; r < m; ++r) {
        const double xh = (x.at(r, j) - bn.running_mean[j]) * inv_std;
        y.at(r, j) = bn.gain[j] * xh + bn.bias[j];
        if (cache) cache->xhat.at(r, j) = xh;
      }
      if (cache) cache->inv_std[j] = inv_std;
    }
  }
}

void batch_norm_backward(BatchNorm& bn, const BatchNormCache& cache,
                         const Matrix& dy, Matrix& dx) {
  const std::size_t n = dy.cols;
  const std::size_t m = dy.rows;
  const double dm = static_cast<double>(m);
  dx.resize(m, n);
  for (std::size_t j = 0; j < n; ++j) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double g = dy.at(r, j);
      sum_dy += g;
      sum_dy_xhat += g * cache.xhat.at(r, j);
    }
    bn.grad_bias[j] += sum_dy;
    bn.grad_gain[j] += sum_dy_xhat;
    const double scale = bn.gain[j] * cache.inv_std[j];
    if (cache.mode == NormMode::kTraining) {
      for (std::size_t r = 0; r < m; ++r)
        dx.at(r, j) = scale / dm *
                      (dm * dy.at(r, j) - sum_dy - cache.xhat.at(r, j) * sum_dy_xhat);
    } else {
      for (std::size_t r = 0; r < m; ++r) dx.at(r, j) = scale * dy.at(r, j);
    }
  }
}

// --------------------------------------------------------------------------
// Activations
// --------------------------------------------------------------------------

void leaky_relu_forward(const Matrix& x, double slope, Matrix& y) {
  y.resize(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    y.data[i] = v > 0.0 ? v : slope * v;
  }
}

void leaky_relu_backward(const Matrix& x, double slope, const Matrix& dy,
                         Matrix& dx) {
  dx.resize(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i)
    dx.data[i] = dy.data[i] * leaky_slope_at(x.data[i], slope);
}

void softmax_forward(const Matrix& x, Matrix& y) {
  y.resize(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* in = x[r];
    double* out = y[r];
    if (x.cols == 0) continue;
    double mx = in[0];
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) out[j] /= sum;
  }
}

void softmax_backward(const Matrix& y, const Matrix& dy, Matrix& dx) {
  dx.resize(y.rows, y.cols);
  for (std::size_t r = 0; r < y.rows; ++r) {
    const double* out = y[r];
    const double* g = dy[r];
    double inner = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) inner += g[j] * out[j];
    double* d = dx[r];
    for (std::size_t j = 0; j < y.cols; ++j) d[j] = out[j] * (g[j] - inner);
  }
}

double sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::min(1.0 - kSigmoidFloor, std::max(kSigmoidFloor, y));
}

// --------------------------------------------------------------------------
// Adam
// --------------------------------------------------------------------------

void Adam::attach(double* w, const double* g, std::size_t n) {
  Slot slot;
  slot.w = w;
  slot.g = g;
  slot.n = n;
  slot.m.assign(n, 0.0);
  slot.v.assign(n, 0.0);
  slots.push_back(std::move(slot));
}

void Adam::attach(DenseLayer& layer) {
  attach(layer.W.data.data(), layer.grad_W.data.data(), layer.W.size());
  attach(layer.b.data(), layer.grad_b.data(), layer.b.size());
}

void Adam::attach(LayerNorm& ln) {
  attach(ln.gain.data(), ln.grad_gain.data(), ln.gain.size());
  attach(ln.bias.data(), ln.grad_bias.data(), ln.bias.size());
}

void Adam::attach(BatchNorm& bn) {
  attach(bn.gain.data(), bn.grad_gain.data(), bn.gain.size());
  attach(bn.bias.data(), bn.grad_bias.data(), bn.bias.size());
}

bool Adam::step() {
  for (const Slot& s : slots)
    for (std::size_t i = 0; i < s.n; ++i)
      if (!std::isfinite(s.g[i])) {
        ++rejected;
        return false;
      }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (Slot& s : slots) {
    for (std::size_t i = 0; i < s.n; ++i) {
      const double g = s.g[i];
      s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
      s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      s.w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  return true;
}

// --------------------------------------------------------------------------
// Dirichlet
// --------------------------------------------------------------------------

DirichletPrior DirichletPrior::uniform(std::size_t dim, double value) {
  DirichletPrior p;
  p.alpha.assign(dim, value);
  return p;
}

void DirichletPrior::validate() const {
  if (alpha.empty()) throw ConfigError("dirichlet prior: empty alpha");
  for (double a : alpha)
    if (!(a > 0.0)) throw ConfigError("dirichlet prior: alpha entries must be > 0");
}

void sample_dirichlet(const DirichletPrior& prior, Rng& rng,
                      std::span<double> theta) {
  prior.validate();
  require(theta.size() == prior.alpha.size(), "sample_dirichlet: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = rng.gamma(prior.alpha[i]);
    sum += theta[i];
  }
  if (sum <= 0.0) {
    // all-zero gamma draws are possible only for pathologically small alpha;
    // fall back to the uniform point of the simplex
    const double u = 1.0 / static_cast<double>(theta.size());
    for (double& x : theta) x = u;
    return;
  }
  for (double& x : theta) x /= sum;
}

Matrix sample_dirichlet_batch(const DirichletPrior& prior, Rng& rng,
                              std::size_t batch) {
  Matrix theta(batch, prior.alpha.size());
  for (std::size_t r = 0; r < batch; ++r) sample_dirichlet(prior, rng, theta.row(r));
  return theta;
}

// --------------------------------------------------------------------------
// Gradient checker
// --------------------------------------------------------------------------

GradCheckReport check_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<double> x, std::span<const double> analytic, double h) {
  require(x.size() == analytic.size(), "check_gradient: size mismatch");
  GradCheckReport report;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double abs_err = std::abs(a - numeric);
    const double rel_err =
        abs_err / std::max({std::abs(a), std::abs(numeric), 1e-4});
    if (rel_err > report.max_rel_err) {
      report.max_rel_err = rel_err;
      report.max_abs_err = abs_err;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

// --------------------------------------------------------------------------
// Jacobi eigendecomposition
// --------------------------------------------------------------------------

void sym_eigen(const Matrix& A, std::vector<double>& eigenvalues, Matrix& V) {
  require(A.rows == A.cols, "sym_eigen: matrix not square");
  const std::size_t n = A.rows;
  Matrix S = A;
  V = Matrix::identity(n);
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += S.at(p, q) * S.at(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = S.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (S.at(q, q) - S.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double skp = S.at(k, p), skq = S.at(k, q);
          S.at(k, p) = c * skp - s * skq;
          S.at(k, q) = s * skp + c * skq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double spk = S.at(p, k), sqk = S.at(q, k);
          S.at(p, k) = c * spk - s * sqk;
          S.at(q, k) = s * spk + c * sqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V.at(k, p), vkq = V.at(k, q);
          V.at(k, p) = c * vkp - s * vkq;
          V.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.assign(n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = S.at(i, i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return diag[a] > diag[b]; });
  Matrix sorted(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    eigenvalues[c] = diag[order[c]];
    for (std::size_t r = 0; r < n; ++r) sorted.at(r, c) = V.at(r, order[c]);
  }
  V = std::move(sorted);
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a_doubles(std::span<const double> xs, std::uint64_t seed) {
  return fnv1a(xs.data(), xs.size() * sizeof(double), seed);
}

}  // namespace aem
