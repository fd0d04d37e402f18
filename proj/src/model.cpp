#include "aem/model.hpp"

#include <cassert>
#include <cmath>

#include "aem/errors.hpp"

namespace aem {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ContractViolation(msg);
}

void check_simplex_rows(const Matrix& theta) {
  for (std::size_t r = 0; r < theta.rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < theta.cols; ++c) {
      const double v = theta.at(r, c);
      if (v < -1e-9) throw ContractViolation("generator input has negative entries");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ContractViolation("generator input rows must sum to 1");
  }
}

}  // namespace

void GeneratorParams::zero_grad() {
  hidden.zero_grad();
  std::fill(hidden_ln.grad_gain.begin(), hidden_ln.grad_gain.end(), 0.0);
  std::fill(hidden_ln.grad_bias.begin(), hidden_ln.grad_bias.end(), 0.0);
  for (DenseLayer& l : extra) l.zero_grad();
  for (LayerNorm& ln : extra_ln) {
    std::fill(ln.grad_gain.begin(), ln.grad_gain.end(), 0.0);
    std::fill(ln.grad_bias.begin(), ln.grad_bias.end(), 0.0);
  }
  for (GeneratorSubnet& s : subnets) {
    s.lin.zero_grad();
    std::fill(s.bn.grad_gain.begin(), s.bn.grad_gain.end(), 0.0);
    std::fill(s.bn.grad_bias.begin(), s.bn.grad_bias.end(), 0.0);
  }
}

Matrix generator_forward(GeneratorParams& gen, const Matrix& event_mix,
                         NormMode mode, GeneratorCache* cache) {
  require(event_mix.cols == static_cast<std::size_t>(gen.event_count),
          "generator_forward: event mix width mismatch");
  check_simplex_rows(event_mix);

  GeneratorCache local;
  GeneratorCache& c = cache ? *cache : local;
  c.mode = mode;
  c.event_mix = event_mix;

  dense_forward(gen.hidden, event_mix, c.hidden_pre);
  layer_norm_forward(gen.hidden_ln, c.hidden_pre, c.hidden_post_ln, &c.hidden_ln);
  leaky_relu_forward(c.hidden_post_ln, gen.leaky_slope, c.hidden_out);

  c.extra_pre.resize(gen.extra.size());
  c.extra_post_ln.resize(gen.extra.size());
  c.extra_out.resize(gen.extra.size());
  c.extra_ln.resize(gen.extra.size());
  const Matrix* h = &c.hidden_out;
  for (std::size_t i = 0; i < gen.extra.size(); ++i) {
    dense_forward(gen.extra[i], *h, c.extra_pre[i]);
    layer_norm_forward(gen.extra_ln[i], c.extra_pre[i], c.extra_post_ln[i],
                       &c.extra_ln[i]);
    leaky_relu_forward(c.extra_post_ln[i], gen.leaky_slope, c.extra_out[i]);
    h = &c.extra_out[i];
  }

  Matrix out(event_mix.rows, static_cast<std::size_t>(gen.total_vocab()));
  std::size_t offset = 0;
  for (int f = 0; f < kNumFields; ++f) {
    GeneratorSubnet& sub = gen.subnets[f];
    const std::size_t width = sub.lin.out_dim();
    if (width == 0) continue;
    dense_forward(sub.lin, *h, c.sub_pre[f]);
    batch_norm_forward(sub.bn, c.sub_pre[f], mode, c.sub_norm[f], &c.sub_bn[f]);
    softmax_forward(c.sub_norm[f], c.sub_softmax[f]);
    for (std::size_t r = 0; r < out.rows; ++r)
      std::copy(c.sub_softmax[f][r], c.sub_softmax[f][r] + width, out[r] + offset);
    offset += width;
  }
  return out;
}

void generator_backward(GeneratorParams& gen, const GeneratorCache& cache,
                        const Matrix& d_output) {
  require(d_output.cols == static_cast<std::size_t>(gen.total_vocab()),
          "generator_backward: output width mismatch");
  const std::size_t m = d_output.rows;
  const Matrix& hidden_top = cache.last_hidden();

  Matrix d_hidden(m, static_cast<std::size_t>(gen.hidden_width));
  Matrix block, d_sm, d_bn, d_lin;
  std::size_t offset = 0;
  for (int f = 0; f < kNumFields; ++f) {
    GeneratorSubnet& sub = gen.subnets[f];
    const std::size_t width = sub.lin.out_dim();
    if (width == 0) continue;
    block.resize(m, width);
    for (std::size_t r = 0; r < m; ++r)
      std::copy(d_output[r] + offset, d_output[r] + offset + width, block[r]);
    offset += width;

    softmax_backward(cache.sub_softmax[f], block, d_sm);
    batch_norm_backward(sub.bn, cache.sub_bn[f], d_sm, d_bn);
    dense_backward(sub.lin, hidden_top, d_bn, &d_lin);
    for (std::size_t i = 0; i < d_hidden.size(); ++i)
      d_hidden.data[i] += d_lin.data[i];
  }

  Matrix d_act, d_ln;
  for (std::size_t i = gen.extra.size(); i-- > 0;) {
    leaky_relu_backward(cache.extra_post_ln[i], gen.leaky_slope, d_hidden, d_act);
    layer_norm_backward(gen.extra_ln[i], cache.extra_ln[i], d_act, d_ln);
    const Matrix& below = i == 0 ? cache.hidden_out : cache.extra_out[i - 1];
    dense_backward(gen.extra[i], below, d_ln, &d_hidden);
  }

  leaky_relu_backward(cache.hidden_post_ln, gen.leaky_slope, d_hidden, d_act);
  layer_norm_backward(gen.hidden_ln, cache.hidden_ln, d_act, d_ln);
  dense_backward(gen.hidden, cache.event_mix, d_ln, nullptr);
}

// --------------------------------------------------------------------------
// Discriminator
// --------------------------------------------------------------------------

void DiscriminatorParams::zero_grad() {
  input_layer.zero_grad();
  feature_layer.zero_grad();
  output_layer.zero_grad();
}

void refresh_spectral(DiscriminatorParams& disc, int iterations) {
  if (!disc.use_spectral_norm) return;
  for (DenseLayer* l : disc.layers()) spectral_normalize(*l, iterations);
}

void discriminator_forward(const DiscriminatorParams& disc, const Matrix& x,
                           DiscriminatorCache& cache) {
  require(x.cols == static_cast<std::size_t>(disc.input_dim),
          "discriminator_forward: input width mismatch");
  cache.x0 = x;
  dense_forward(disc.input_layer, x, cache.z1);
  leaky_relu_forward(cache.z1, disc.leaky_slope, cache.x1);
  dense_forward(disc.feature_layer, cache.x1, cache.z2);
  leaky_relu_forward(cache.z2, disc.leaky_slope, cache.x2);
  Matrix z3;
  dense_forward(disc.output_layer, cache.x2, z3);
  cache.z3.resize(x.rows);
  cache.out.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    cache.z3[r] = z3.at(r, 0);
    cache.out[r] = sigmoid(z3.at(r, 0));
  }
}

void discriminator_backward(DiscriminatorParams& disc,
                            const DiscriminatorCache& cache,
                            std::span<const double> d_out_grad, Matrix* dx,
                            bool accumulate_params) {
  const std::size_t m = cache.x0.rows;
  require(d_out_grad.size() == m, "discriminator_backward: grad size mismatch");

  Matrix g3(m, 1);
  for (std::size_t r = 0; r < m; ++r)
    g3.at(r, 0) = d_out_grad[r] * sigmoid_grad(cache.out[r]);

  // Per batched layer: parameter grads from (upstream^T x input), input grad
  // via the normalized weight view.
  Matrix dx2, dx1, t2, t1;
  if (accumulate_params) dense_backward(disc.output_layer, cache.x2, g3, &dx2);
  else gemm_ab(g3, disc.output_layer.weight_view(), dx2);

  leaky_relu_backward(cache.z2, disc.leaky_slope, dx2, t2);
  if (accumulate_params) dense_backward(disc.feature_layer, cache.x1, t2, &dx1);
  else gemm_ab(t2, disc.feature_layer.weight_view(), dx1);

  leaky_relu_backward(cache.z1, disc.leaky_slope, dx1, t1);
  if (accumulate_params) {
    dense_backward(disc.input_layer, cache.x0, t1, dx);
  } else if (dx) {
    gemm_ab(t1, disc.input_layer.weight_view(), *dx);
  }
}

Matrix discriminator_input_gradient(const DiscriminatorParams& disc,
                                    const DiscriminatorCache& cache) {
  const std::size_t m = cache.x0.rows;
  std::vector<double> ones(m, 1.0);
  Matrix grad;
  // const_cast is safe: accumulate_params = false touches no parameter state
  discriminator_backward(const_cast<DiscriminatorParams&>(disc), cache, ones,
                         &grad, false);
  return grad;
}

void discriminator_grad_dot_backward(DiscriminatorParams& disc,
                                     const DiscriminatorCache& cache,
                                     const Matrix& v) {
  // Scalar being differentiated: s = sum_j v_j . grad_x out_j. The gradient
  // of out along direction v is carried forward as a tangent, then the
  // augmented graph is walked backwards. LeakyReLU has zero curvature almost
  // everywhere, so only the sigmoid contributes a second derivative.
  const std::size_t m = cache.x0.rows;
  require(v.rows == m && v.cols == cache.x0.cols,
          "grad_dot_backward: direction shape mismatch");

  const Matrix& W1 = disc.input_layer.weight_view();
  const Matrix& W2 = disc.feature_layer.weight_view();
  const Matrix& W3 = disc.output_layer.weight_view();

  // tangent forward
  Matrix z1_dot, x1_dot, z2_dot, x2_dot, z3_dot;
  gemm_abt(v, W1, z1_dot);
  leaky_relu_backward(cache.z1, disc.leaky_slope, z1_dot, x1_dot);  // phi' o z_dot
  gemm_abt(x1_dot, W2, z2_dot);
  leaky_relu_backward(cache.z2, disc.leaky_slope, z2_dot, x2_dot);
  gemm_abt(x2_dot, W3, z3_dot);

  // adjoints of s w.r.t. z3 and z3_dot
  Matrix a3(m, 1), b3(m, 1);
  for (std::size_t r = 0; r < m; ++r) {
    a3.at(r, 0) = sigmoid_grad2(cache.out[r]) * z3_dot.at(r, 0);
    b3.at(r, 0) = sigmoid_grad(cache.out[r]);
  }

  const auto accumulate_layer = [](DenseLayer& layer, const Matrix& a,
                                   const Matrix& b, const Matrix& x,
                                   const Matrix& x_dot) {
    if (layer.spectral) {
      Matrix grad_normed(layer.W.rows, layer.W.cols);
      ref::gemm_atb_acc(a, x, grad_normed);
      ref::gemm_atb_acc(b, x_dot, grad_normed);
      accumulate_spectral_grad(layer, grad_normed);
    } else {
      gemm_atb_acc(a, x, layer.grad_W);
      gemm_atb_acc(b, x_dot, layer.grad_W);
    }
    col_sums_acc(a, layer.grad_b);
  };

  accumulate_layer(disc.output_layer, a3, b3, cache.x2, x2_dot);

  Matrix ax2, bx2, a2, b2;
  gemm_ab(a3, W3, ax2);
  gemm_ab(b3, W3, bx2);
  leaky_relu_backward(cache.z2, disc.leaky_slope, ax2, a2);
  leaky_relu_backward(cache.z2, disc.leaky_slope, bx2, b2);
  accumulate_layer(disc.feature_layer, a2, b2, cache.x1, x1_dot);

  Matrix ax1, bx1, a1, b1;
  gemm_ab(a2, W2, ax1);
  gemm_ab(b2, W2, bx1);
  leaky_relu_backward(cache.z1, disc.leaky_slope, ax1, a1);
  leaky_relu_backward(cache.z1, disc.leaky_slope, bx1, b1);
  accumulate_layer(disc.input_layer, a1, b1, cache.x0, v);
}

// --------------------------------------------------------------------------
// Construction
// --------------------------------------------------------------------------

GeneratorParams init_generator(const ModelShape& shape, Rng& rng) {
  GeneratorParams gen;
  gen.event_count = shape.event_count;
  gen.hidden_width = shape.hidden_width;
  gen.depth = shape.depth;
  gen.field_sizes = shape.field_sizes;
  gen.leaky_slope = shape.leaky_slope;

  const auto h = static_cast<std::size_t>(shape.hidden_width);
  gen.hidden = make_dense(h, static_cast<std::size_t>(shape.event_count), rng);
  gen.hidden_ln = make_layer_norm(h);
  for (int i = 0; i < shape.depth - 3; ++i) {
    gen.extra.push_back(make_dense(h, h, rng));
    gen.extra_ln.push_back(make_layer_norm(h));
  }
  for (int f = 0; f < kNumFields; ++f) {
    const auto width = static_cast<std::size_t>(shape.field_sizes[f]);
    gen.subnets[f].lin = make_dense(width, h, rng);
    gen.subnets[f].bn = make_batch_norm(width);
  }
  return gen;
}

DiscriminatorParams init_discriminator(const ModelShape& shape, Rng& rng) {
  DiscriminatorParams disc;
  int v = 0;
  for (int s : shape.field_sizes) v += s;
  disc.input_dim = v;
  disc.feature_width = shape.disc_width;
  disc.leaky_slope = shape.leaky_slope;
  disc.use_spectral_norm = shape.use_spectral_norm;

  const auto hd = static_cast<std::size_t>(shape.disc_width);
  const bool sn = shape.use_spectral_norm;
  disc.input_layer = make_dense(hd, static_cast<std::size_t>(v), rng, sn);
  disc.feature_layer = make_dense(hd, hd, rng, sn);
  disc.output_layer = make_dense(1, hd, rng, sn);
  return disc;
}

std::pair<GeneratorParams, DiscriminatorParams> init_model(const ModelShape& shape,
                                                           Rng& rng) {
  int v = 0;
  for (int s : shape.field_sizes) {
    if (s < 0) throw ConfigError("init_model: negative field size");
    v += s;
  }
  if (shape.event_count < 2) throw ConfigError("init_model: event count must be >= 2");
  if (shape.hidden_width < 1) throw ConfigError("init_model: hidden width must be >= 1");
  if (shape.disc_width < 1) throw ConfigError("init_model: disc width must be >= 1");
  if (v < 4) throw ConfigError("init_model: total vocabulary must be >= 4");
  if (shape.depth < 3 || shape.depth > 5)
    throw ConfigError("init_model: generator depth must be 3, 4 or 5");
  return {init_generator(shape, rng), init_discriminator(shape, rng)};
}

namespace {

std::uint64_t fold(std::uint64_t h, std::span<const double> xs) {
  return fnv1a_doubles(xs, h);
}

std::uint64_t fold(std::uint64_t h, const Matrix& m) {
  return fnv1a_doubles(m.data, h);
}

}  // namespace

std::uint64_t generator_fingerprint(const GeneratorParams& gen) {
  std::uint64_t h = 1469598103934665603ULL;
  h = fold(h, gen.hidden.W);
  h = fold(h, gen.hidden.b);
  h = fold(h, gen.hidden_ln.gain);
  h = fold(h, gen.hidden_ln.bias);
  for (std::size_t i = 0; i < gen.extra.size(); ++i) {
    h = fold(h, gen.extra[i].W);
    h = fold(h, gen.extra[i].b);
    h = fold(h, gen.extra_ln[i].gain);
    h = fold(h, gen.extra_ln[i].bias);
  }
  for (const GeneratorSubnet& s : gen.subnets) {
    h = fold(h, s.lin.W);
    h = fold(h, s.lin.b);
    h = fold(h, s.bn.gain);
    h = fold(h, s.bn.bias);
    h = fold(h, s.bn.running_mean);
    h = fold(h, s.bn.running_var);
  }
  return h;
}

std::uint64_t discriminator_fingerprint(const DiscriminatorParams& disc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const DenseLayer* l : disc.layers()) {
    h = fold(h, l->W);
    h = fold(h, l->b);
    if (l->spectral) h = fold(h, l->sn_u);
  }
  return h;
}

}  // namespace aem
