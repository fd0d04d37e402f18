#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "aem/errors.hpp"
#include "aem/numerics.hpp"

using namespace aem;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal() * scale;
  return m;
}

// SVD oracle: largest singular value via the symmetric eigenproblem of W^T W.
// Independent of the power-iteration path it is used to check.
double sigma_max_oracle(const Matrix& W) {
  Matrix gram(W.cols, W.cols);
  ref::gemm_atb_acc(W, W, gram);
  std::vector<double> evals;
  Matrix evecs;
  sym_eigen(gram, evals, evecs);
  return std::sqrt(std::max(evals[0], 0.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// dense layer
// ---------------------------------------------------------------------------

TEST_CASE("dense forward: scalar product and identity") {
  Rng rng(1);
  DenseLayer layer = make_dense(1, 1, rng);
  layer.W.at(0, 0) = 2.0;
  layer.b[0] = 0.0;
  Matrix x(1, 1);
  x.at(0, 0) = 3.0;
  Matrix y;
  dense_forward(layer, x, y);
  CHECK(y.at(0, 0) == doctest::Approx(6.0));

  DenseLayer id = make_dense(3, 3, rng);
  id.W = Matrix::identity(3);
  std::fill(id.b.begin(), id.b.end(), 0.0);
  Matrix x3 = random_matrix(2, 3, rng);
  dense_forward(id, x3, y);
  for (std::size_t i = 0; i < x3.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(x3.data[i]));
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(2);
  DenseLayer layer = make_dense(4, 3, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix weights = random_matrix(5, 4, rng);  // fixed loss coefficients

  const auto loss = [&](const DenseLayer& l) {
    Matrix y;
    dense_forward(l, x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights.data[i] * y.data[i];
    return s;
  };

  layer.zero_grad();
  Matrix dx;
  dense_backward(layer, x, weights, &dx);

  auto report = check_gradient(
      [&](std::span<const double>) { return loss(layer); },
      std::span<double>(layer.W.data), std::span<const double>(layer.grad_W.data));
  CHECK(report.max_rel_err <= 1e-6);

  report = check_gradient([&](std::span<const double>) { return loss(layer); },
                          std::span<double>(layer.b),
                          std::span<const double>(layer.grad_b));
  CHECK(report.max_rel_err <= 1e-6);

  // input gradient
  Matrix xm = x;
  report = check_gradient(
      [&](std::span<const double>) {
        Matrix y;
        dense_forward(layer, xm, y);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += weights.data[i] * y.data[i];
        return s;
      },
      std::span<double>(xm.data), std::span<const double>(dx.data));
  CHECK(report.max_rel_err <= 1e-6);
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

TEST_CASE("layer norm: two-point row and constant row") {
  LayerNorm ln = make_layer_norm(2);
  Matrix x(1, 2);
  x.at(0, 0) = 1.0;
  x.at(0, 1) = 3.0;
  Matrix y;
  layer_norm_forward(ln, x, y, nullptr);
  CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-4));

  LayerNorm ln3 = make_layer_norm(3);
  Matrix c(1, 3, 5.0);
  layer_norm_forward(ln3, c, y, nullptr);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(y.at(0, j)) < 1e-6);
}

TEST_CASE("layer norm is shift invariant before gain and bias") {
  Rng rng(3);
  LayerNorm ln = make_layer_norm(6);
  Matrix x = random_matrix(4, 6, rng);
  Matrix shifted = x;
  for (double& v : shifted.data) v += 2.5;
  Matrix y1, y2;
  layer_norm_forward(ln, x, y1, nullptr);
  layer_norm_forward(ln, shifted, y2, nullptr);
  for (std::size_t i = 0; i < y1.size(); ++i)
    CHECK(y1.data[i] == doctest::Approx(y2.data[i]).epsilon(1e-6));
}

TEST_CASE("layer norm backward matches finite differences") {
  Rng rng(4);
  LayerNorm ln = make_layer_norm(5);
  for (double& g : ln.gain) g = 1.0 + 0.3 * rng.normal();
  for (double& b : ln.bias) b = 0.2 * rng.normal();
  Matrix x = random_matrix(3, 5, rng);
  const Matrix weights = random_matrix(3, 5, rng);

  LayerNormCache cache;
  Matrix y, dx;
  layer_norm_forward(ln, x, y, &cache);
  layer_norm_backward(ln, cache, weights, dx);

  const auto loss = [&] {
    Matrix out;
    layer_norm_forward(ln, x, out, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += weights.data[i] * out.data[i];
    return s;
  };
  const auto report = check_gradient(
      [&](std::span<const double>) { return loss(); }, std::span<double>(x.data),
      std::span<const double>(dx.data));
  CHECK(report.max_rel_err <= 1e-5);

  const auto gain_report = check_gradient(
      [&](std::span<const double>) { return loss(); }, std::span<double>(ln.gain),
      std::span<const double>(ln.grad_gain));
  CHECK(gain_report.max_rel_err <= 1e-5);
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

TEST_CASE("batch norm: symmetric column in training mode") {
  BatchNorm bn = make_batch_norm(1);
  Matrix x(2, 1);
  x.at(0, 0) = 1.0;
  x.at(1, 0) = 3.0;
  Matrix y;
  batch_norm_forward(bn, x, NormMode::kTraining, y, nullptr);
  CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(bn.updates == 1);
}

TEST_CASE("batch norm inference follows the momentum recurrence") {
  BatchNorm bn = make_batch_norm(1);
  Matrix x(2, 1);
  x.at(0, 0) = 1.0;
  x.at(1, 0) = 3.0;
  Matrix y;
  batch_norm_forward(bn, x, NormMode::kTraining, y, nullptr);

  // recompute the recurrence independently: batch mean 2, population var 1
  const double rm = 0.9 * 0.0 + 0.1 * 2.0;
  const double rv = 0.9 * 1.0 + 0.1 * 1.0;
  Matrix probe(1, 1);
  probe.at(0, 0) = 2.0;
  batch_norm_forward(bn, probe, NormMode::kInference, y, nullptr);
  CHECK(y.at(0, 0) ==
        doctest::Approx((2.0 - rm) / std::sqrt(rv + kBatchNormEps)).epsilon(1e-12));
}

TEST_CASE("batch norm rejects training batches of one") {
  BatchNorm bn = make_batch_norm(2);
  Matrix x(1, 2);
  Matrix y;
  CHECK_THROWS_AS(batch_norm_forward(bn, x, NormMode::kTraining, y, nullptr),
                  ContractViolation);
  CHECK_NOTHROW(batch_norm_forward(bn, x, NormMode::kInference, y, nullptr));
}

TEST_CASE("batch norm backward matches finite differences") {
  Rng rng(5);
  BatchNorm bn = make_batch_norm(4);
  for (double& g : bn.gain) g = 1.0 + 0.2 * rng.normal();
  Matrix x = random_matrix(6, 4, rng);
  const Matrix weights = random_matrix(6, 4, rng);

  BatchNormCache cache;
  Matrix y, dx;
  {
    BatchNorm probe = bn;  // keep running stats unchanged for the FD closure
    batch_norm_forward(probe, x, NormMode::kTraining, y, &cache);
  }
  batch_norm_backward(bn, cache, weights, dx);

  const auto report = check_gradient(
      [&](std::span<const double>) {
        BatchNorm probe = bn;
        Matrix out;
        batch_norm_forward(probe, x, NormMode::kTraining, out, nullptr);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += weights.data[i] * out.data[i];
        return s;
      },
      std::span<double>(x.data), std::span<const double>(dx.data));
  CHECK(report.max_rel_err <= 1e-5);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

TEST_CASE("leaky relu values and subgradient convention") {
  Matrix x(1, 3);
  x.at(0, 0) = 2.0;
  x.at(0, 1) = -2.0;
  x.at(0, 2) = 0.0;
  Matrix y;
  leaky_relu_forward(x, 0.1, y);
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(0, 1) == doctest::Approx(-0.2));
  CHECK(y.at(0, 2) == 0.0);
  CHECK(leaky_slope_at(0.0, 0.1) == 0.1);
}

TEST_CASE("softmax rows: symmetry, stability, gradient") {
  Matrix x(2, 2);
  x.at(0, 0) = 0.0;
  x.at(0, 1) = 0.0;
  x.at(1, 0) = 1000.0;
  x.at(1, 1) = 0.0;
  Matrix y;
  softmax_forward(x, y);
  CHECK(y.at(0, 0) == doctest::Approx(0.5));
  CHECK(y.at(1, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(y.at(1, 0)));

  Rng rng(6);
  Matrix xin = random_matrix(3, 5, rng);
  const Matrix weights = random_matrix(3, 5, rng);
  Matrix out, dx;
  softmax_forward(xin, out);
  softmax_backward(out, weights, dx);
  const auto report = check_gradient(
      [&](std::span<const double>) {
        Matrix o;
        softmax_forward(xin, o);
        double s = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) s += weights.data[i] * o.data[i];
        return s;
      },
      std::span<double>(xin.data), std::span<const double>(dx.data));
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(7);
  Matrix x = random_matrix(50, 9, rng, 4.0);
  Matrix y;
  softmax_forward(x, y);
  for (std::size_t r = 0; r < y.rows; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) {
      CHECK(y.at(r, j) > 0.0);
      sum += y.at(r, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("sigmoid: midpoint, clamping and gradient") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(1000.0) == 1.0 - kSigmoidFloor);
  CHECK(sigmoid(-1000.0) == kSigmoidFloor);

  std::vector<double> x = {0.7};
  const double y = sigmoid(x[0]);
  std::vector<double> grad = {sigmoid_grad(y)};
  const auto report = check_gradient(
      [](std::span<const double> v) { return sigmoid(v[0]); },
      std::span<double>(x), std::span<const double>(grad));
  CHECK(report.max_rel_err <= 1e-6);
}

// ---------------------------------------------------------------------------
// spectral normalization
// ---------------------------------------------------------------------------

TEST_CASE("spectral norm of the identity is one") {
  Rng rng(8);
  DenseLayer layer = make_dense(2, 2, rng, true);
  layer.W = Matrix::identity(2);
  const double sigma = spectral_normalize(layer, 50);
  CHECK(sigma == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(layer.W_normed.data[i] == doctest::Approx(layer.W.data[i]));
}

TEST_CASE("spectral norm of diag(3,1)") {
  Rng rng(9);
  DenseLayer layer = make_dense(2, 2, rng, true);
  layer.W.fill(0.0);
  layer.W.at(0, 0) = 3.0;
  layer.W.at(1, 1) = 1.0;
  const double sigma = spectral_normalize(layer, 50);
  CHECK(sigma == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(layer.W_normed.at(0, 0) == doctest::Approx(1.0));
  CHECK(layer.W_normed.at(1, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("power iteration matches the SVD oracle on random matrices") {
  // 50 iterations, continued in blocks while sigma still moves: a tight
  // spectral gap (sigma2/sigma1 near 1) slows plain power iteration far
  // below the target accuracy, and u persists across calls anyway.
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    DenseLayer layer = make_dense(20, 20, rng, true);
    for (double& v : layer.W.data) v = rng.normal();
    double sigma = spectral_normalize(layer, 50);
    for (int block = 0; block < 200; ++block) {
      const double prev = sigma;
      sigma = spectral_normalize(layer, 50);
      if (std::abs(sigma - prev) <= 1e-13 * sigma) break;
    }
    const double oracle = sigma_max_oracle(layer.W);
    CHECK(std::abs(sigma - oracle) <= 1e-6);
    CHECK(std::abs(sigma_max_oracle(layer.W_normed) - 1.0) <= 1e-6);
  }
}

TEST_CASE("zero matrix is guarded") {
  Rng rng(11);
  DenseLayer layer = make_dense(3, 3, rng, true);
  layer.W.fill(0.0);
  const double sigma = spectral_normalize(layer, 5);
  CHECK(sigma == kSpectralSigmaFloor);
  for (double v : layer.W_normed.data) CHECK(v == 0.0);
}

TEST_CASE("spectral backward includes the sigma dependence") {
  Rng rng(12);
  DenseLayer layer = make_dense(4, 3, rng, true);
  spectral_normalize(layer, 30);  // converge u, then hold it fixed
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix weights = random_matrix(5, 4, rng);

  layer.zero_grad();
  {
    spectral_normalize(layer, 0);
    Matrix y;
    dense_forward(layer, x, y);
    dense_backward(layer, x, weights, nullptr);
  }
  const auto report = check_gradient(
      [&](std::span<const double>) {
        spectral_normalize(layer, 0);  // recompute sigma from (W, frozen u)
        Matrix y;
        dense_forward(layer, x, y);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += weights.data[i] * y.data[i];
        return s;
      },
      std::span<double>(layer.W.data), std::span<const double>(layer.grad_W.data));
  CHECK(report.max_rel_err <= 1e-4);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("first Adam step moves by about -lr * sign(g)") {
  std::vector<double> w = {1.0, -2.0};
  std::vector<double> g = {0.5, -3.0};
  Adam opt;
  opt.lr = 0.01;
  opt.attach(w.data(), g.data(), 2);
  REQUIRE(opt.step());
  CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("zero gradients are a fixed point") {
  std::vector<double> w = {1.0, 2.0, 3.0};
  std::vector<double> g = {0.0, 0.0, 0.0};
  Adam opt;
  opt.attach(w.data(), g.data(), 3);
  for (int i = 0; i < 10; ++i) REQUIRE(opt.step());
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 2.0);
  CHECK(w[2] == 3.0);
}

TEST_CASE("beta1=beta2=0 reduces to sign descent") {
  std::vector<double> w = {0.0};
  std::vector<double> g = {2.5};
  Adam opt;
  opt.lr = 0.1;
  opt.beta1 = 0.0;
  opt.beta2 = 0.0;
  opt.eps = 1e-12;
  opt.attach(w.data(), g.data(), 1);
  for (int i = 1; i <= 5; ++i) {
    REQUIRE(opt.step());
    CHECK(w[0] == doctest::Approx(-0.1 * i).epsilon(1e-9));
  }
}

TEST_CASE("non-finite gradients reject the step") {
  std::vector<double> w = {1.0};
  std::vector<double> g = {std::numeric_limits<double>::quiet_NaN()};
  Adam opt;
  opt.attach(w.data(), g.data(), 1);
  CHECK_FALSE(opt.step());
  CHECK(w[0] == 1.0);
  CHECK(opt.t == 0);
  CHECK(opt.rejected == 1);
}

TEST_CASE("identical seeds give identical trajectories") {
  const auto run = [] {
    Rng rng(33);
    std::vector<double> w = {0.3, -0.7};
    std::vector<double> g(2);
    Adam opt;
    opt.attach(w.data(), g.data(), 2);
    for (int i = 0; i < 20; ++i) {
      g[0] = rng.normal();
      g[1] = rng.normal();
      opt.step();
    }
    return w;
  };
  CHECK(run() == run());
}

// ---------------------------------------------------------------------------
// Dirichlet
// ---------------------------------------------------------------------------

TEST_CASE("one-dimensional Dirichlet is degenerate") {
  Rng rng(13);
  DirichletPrior prior = DirichletPrior::uniform(1);
  std::vector<double> theta(1);
  for (int i = 0; i < 5; ++i) {
    sample_dirichlet(prior, rng, theta);
    CHECK(theta[0] == 1.0);
  }
}

TEST_CASE("Dirichlet samples sit on the simplex") {
  Rng rng(14);
  DirichletPrior prior = DirichletPrior::uniform(6);
  std::vector<double> theta(6);
  for (int i = 0; i < 200; ++i) {
    sample_dirichlet(prior, rng, theta);
    double sum = 0.0;
    for (double v : theta) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("Dirichlet(2,1,1) empirical mean matches the moment formula") {
  Rng rng(15);
  DirichletPrior prior;
  prior.alpha = {2.0, 1.0, 1.0};
  const int n = 20000;
  std::vector<double> theta(3), mean(3, 0.0);
  for (int i = 0; i < n; ++i) {
    sample_dirichlet(prior, rng, theta);
    for (int j = 0; j < 3; ++j) mean[j] += theta[j];
  }
  for (int j = 0; j < 3; ++j) mean[j] /= n;
  // component variance alpha_i (a0 - alpha_i) / (a0^2 (a0 + 1)), a0 = 4
  const double se1 = std::sqrt(2.0 * 2.0 / (16.0 * 5.0) / n);
  const double se2 = std::sqrt(1.0 * 3.0 / (16.0 * 5.0) / n);
  CHECK(std::abs(mean[0] - 0.5) <= 4.0 * se1);
  CHECK(std::abs(mean[1] - 0.25) <= 4.0 * se2);
  CHECK(std::abs(mean[2] - 0.25) <= 4.0 * se2);
}

TEST_CASE("non-positive alpha is rejected") {
  Rng rng(16);
  DirichletPrior prior;
  prior.alpha = {1.0, 0.0};
  std::vector<double> theta(2);
  CHECK_THROWS_AS(sample_dirichlet(prior, rng, theta), ConfigError);
}

// ---------------------------------------------------------------------------
// gradient checker + eigensolver
// ---------------------------------------------------------------------------

TEST_CASE("gradient checker on a quadratic") {
  std::vector<double> x = {3.0};
  std::vector<double> grad = {6.0};
  const auto report = check_gradient(
      [](std::span<const double> v) { return v[0] * v[0]; }, std::span<double>(x),
      std::span<const double>(grad));
  CHECK(report.max_abs_err <= 1e-6);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("gradient checker flags the kink at zero") {
  std::vector<double> x = {0.0};
  std::vector<double> grad = {0.1};  // the subgradient convention at the kink
  const auto report = check_gradient(
      [](std::span<const double> v) { return std::max(v[0], 0.1 * v[0]); },
      std::span<double>(x), std::span<const double>(grad));
  CHECK(report.max_rel_err > 0.1);  // kinks are excluded from gradient suites
}

TEST_CASE("jacobi eigendecomposition on a known matrix") {
  Matrix a(2, 2);
  a.at(0, 0) = 2.0;
  a.at(0, 1) = 1.0;
  a.at(1, 0) = 1.0;
  a.at(1, 1) = 2.0;
  std::vector<double> evals;
  Matrix evecs;
  sym_eigen(a, evals, evecs);
  CHECK(evals[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(evals[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jacobi reconstruction on random symmetric matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t n = 12;
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double v = rng.normal();
        a.at(i, j) = v;
        a.at(j, i) = v;
      }
    std::vector<double> evals;
    Matrix v;
    sym_eigen(a, evals, v);
    // A V = V diag(evals)
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<double> col(n), av(n);
      for (std::size_t r = 0; r < n; ++r) col[r] = v.at(r, c);
      matvec(a, col, av);
      for (std::size_t r = 0; r < n; ++r)
        CHECK(std::abs(av[r] - evals[c] * col[r]) <= 1e-8);
    }
  }
}
