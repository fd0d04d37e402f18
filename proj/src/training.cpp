#include "aem/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "aem/errors.hpp"

namespace aem {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ContractViolation(msg);
}

// Shuffled pass over the corpus; every document appears exactly once per
// epoch. A leftover of one document is folded into the previous batch so no
// batch of size one ever reaches the models.
struct EpochSampler {
  std::size_t n, batch;
  std::vector<std::size_t> order;
  std::vector<std::size_t> sizes;
  std::size_t pos = 0, batch_idx = 0;

  EpochSampler(std::size_t n_docs, std::size_t batch_size)
      : n(n_docs), batch(batch_size) {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }

  void start_epoch(Rng& rng) {
    std::shuffle(order.begin(), order.end(), rng.engine);
    sizes.clear();
    std::size_t left = n;
    while (left >= batch) {
      sizes.push_back(batch);
      left -= batch;
    }
    if (left == 1 && !sizes.empty()) {
      sizes.back() += 1;
    } else if (left >= 2) {
      sizes.push_back(left);
    } else if (left == 1) {
      sizes.push_back(1);  // n == 1; rejected by validation anyway
    }
    pos = 0;
    batch_idx = 0;
  }

  std::span<const std::size_t> next(Rng& rng) {
    if (batch_idx >= sizes.size()) start_epoch(rng);
    const std::size_t len = sizes[batch_idx];
    std::span<const std::size_t> out(order.data() + pos, len);
    pos += len;
    ++batch_idx;
    return out;
  }
};

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(src[idx[i]], src[idx[i]] + src.cols, out[i]);
  return out;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

std::vector<std::string> TrainConfig::validate(std::size_t corpus_rows,
                                               std::size_t corpus_cols) const {
  std::vector<std::string> errs;
  if (event_count < 2) errs.push_back("event_count must be >= 2");
  if (hidden_width < 1) errs.push_back("hidden_width must be >= 1");
  if (disc_width < 1) errs.push_back("disc_width must be >= 1");
  if (generator_depth < 3 || generator_depth > 5)
    errs.push_back("generator_depth must be 3, 4 or 5");
  if (gp_weight < 0.0) errs.push_back("gp_weight must be >= 0");
  if (disc_steps < 1) errs.push_back("disc_steps must be >= 1");
  if (batch_size < 2) errs.push_back("batch_size must be >= 2");
  if (learning_rate <= 0.0) errs.push_back("learning_rate must be > 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0) errs.push_back("adam_beta1 must be in [0,1)");
  if (adam_beta2 < 0.0 || adam_beta2 >= 1.0) errs.push_back("adam_beta2 must be in [0,1)");
  if (max_gen_steps < 1) errs.push_back("max_gen_steps must be >= 1");
  if (convergence_window < 1) errs.push_back("convergence_window must be >= 1");
  if (convergence_tol < 0.0) errs.push_back("convergence_tol must be >= 0");
  if (power_iterations < 0) errs.push_back("power_iterations must be >= 0");
  if (!dirichlet_alpha.empty()) {
    if (dirichlet_alpha.size() != static_cast<std::size_t>(event_count))
      errs.push_back("dirichlet_alpha length must equal event_count");
    for (double a : dirichlet_alpha)
      if (!(a > 0.0)) {
        errs.push_back("dirichlet_alpha entries must be > 0");
        break;
      }
  }
  if (corpus_rows < static_cast<std::size_t>(std::max(batch_size, 2)))
    errs.push_back("corpus has fewer documents than one batch");
  if (corpus_cols < 4) errs.push_back("document vectors are shorter than 4");
  return errs;
}

double discriminator_loss(std::span<const double> d_out_real,
                          std::span<const double> d_out_fake) {
  require(d_out_real.size() == d_out_fake.size() && !d_out_real.empty(),
          "discriminator_loss: batch mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < d_out_real.size(); ++i)
    sum += -std::log(d_out_real[i]) - std::log(1.0 - d_out_fake[i]);
  return sum / static_cast<double>(d_out_real.size());
}

double generator_loss(std::span<const double> d_out_fake, bool non_saturating) {
  require(!d_out_fake.empty(), "generator_loss: empty batch");
  double sum = 0.0;
  for (double d : d_out_fake)
    sum += non_saturating ? -std::log(d) : std::log(1.0 - d);
  return sum / static_cast<double>(d_out_fake.size());
}

double penalty_from_grad_norms(std::span<const double> norms) {
  require(!norms.empty(), "penalty_from_grad_norms: empty batch");
  double sum = 0.0;
  for (double n : norms) {
    const double d = n - 1.0;
    sum += d * d;
  }
  return sum / static_cast<double>(norms.size());
}

Matrix interpolate_pairs(const Matrix& real, const Matrix& fake, Rng& rng) {
  require(real.same_shape(fake), "interpolate_pairs: shape mismatch");
  Matrix mix(real.rows, real.cols);
  for (std::size_t r = 0; r < real.rows; ++r) {
    const double eps = rng.uniform();
    const double* a = real[r];
    const double* b = fake[r];
    double* o = mix[r];
    for (std::size_t c = 0; c < real.cols; ++c)
      o[c] = eps * a[c] + (1.0 - eps) * b[c];
  }
  return mix;
}

double gradient_penalty(DiscriminatorParams& disc, const Matrix& real,
                        const Matrix& fake, Rng& rng, double grad_scale) {
  const Matrix mix = interpolate_pairs(real, fake, rng);
  DiscriminatorCache cache;
  discriminator_forward(disc, mix, cache);
  const Matrix grads = discriminator_input_gradient(disc, cache);

  const std::size_t m = mix.rows;
  std::vector<double> norms(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) norms[r] = l2_norm(grads.row(r));
  const double penalty = penalty_from_grad_norms(norms);

  if (grad_scale != 0.0) {
    // d penalty / d params goes through the gradient itself: with
    // s = sum_j v_j . grad_x out_j and v_j = scale * 2 (n_j - 1) / (m n_j) g_j,
    // ds/d(params) is exactly the penalty's parameter gradient.
    Matrix v(m, mix.cols);
    for (std::size_t r = 0; r < m; ++r) {
      const double n = std::max(norms[r], 1e-12);
      const double c =
          grad_scale * 2.0 * (norms[r] - 1.0) / (static_cast<double>(m) * n);
      const double* g = grads[r];
      double* o = v[r];
      for (std::size_t j = 0; j < mix.cols; ++j) o[j] = c * g[j];
    }
    discriminator_grad_dot_backward(disc, cache, v);
  }
  return penalty;
}

TrainResult train(const Matrix& corpus_matrix, const TrainConfig& config) {
  {
    const auto errs = config.validate(corpus_matrix.rows, corpus_matrix.cols);
    if (!errs.empty()) {
      std::string msg = "invalid training configuration:";
      for (const std::string& e : errs) msg += "\n  - " + e;
      throw ConfigError(msg);
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(config.seed);

  ModelShape shape;
  shape.event_count = config.event_count;
  shape.hidden_width = config.hidden_width;
  shape.disc_width = config.disc_width;
  shape.depth = config.generator_depth;
  shape.leaky_slope = kDefaultLeakySlope;
  shape.use_spectral_norm = config.use_spectral_norm;
  // field split is irrelevant to the nets; treat the whole vector as one block
  shape.field_sizes = {static_cast<int>(corpus_matrix.cols), 0, 0, 0};

  TrainResult result{init_generator(shape, rng), init_discriminator(shape, rng), {}};
  GeneratorParams& gen = result.generator;
  DiscriminatorParams& disc = result.discriminator;
  TrainTrace& trace = result.trace;

  DirichletPrior prior;
  prior.alpha = config.dirichlet_alpha.empty()
                    ? DirichletPrior::uniform(config.event_count).alpha
                    : config.dirichlet_alpha;
  prior.validate();

  Adam opt_d{config.learning_rate, config.adam_beta1, config.adam_beta2};
  for (DenseLayer* l : disc.layers()) opt_d.attach(*l);
  Adam opt_g{config.learning_rate, config.adam_beta1, config.adam_beta2};
  opt_g.attach(gen.hidden);
  opt_g.attach(gen.hidden_ln);
  for (std::size_t i = 0; i < gen.extra.size(); ++i) {
    opt_g.attach(gen.extra[i]);
    opt_g.attach(gen.extra_ln[i]);
  }
  for (GeneratorSubnet& s : gen.subnets) {
    opt_g.attach(s.lin);
    opt_g.attach(s.bn);
  }

  EpochSampler sampler(corpus_matrix.rows, static_cast<std::size_t>(config.batch_size));
  std::vector<double> gen_losses;
  long disc_step_count = 0;
  const auto abort = [&](const std::string& why) {
    trace.aborted = true;
    trace.abort_reason = why;
  };

  for (long g_step = 1; g_step <= config.max_gen_steps && !trace.aborted; ++g_step) {
    const std::size_t round_begin = trace.rows.size();
    for (int t = 0; t < config.disc_steps && !trace.aborted; ++t) {
      const auto idx = sampler.next(rng);
      const Matrix real = gather_rows(corpus_matrix, idx);
      const Matrix theta = sample_dirichlet_batch(prior, rng, idx.size());
      const Matrix fake = generator_forward(gen, theta, NormMode::kTraining, nullptr);

      if (config.use_spectral_norm) refresh_spectral(disc, config.power_iterations);

      DiscriminatorCache c_real, c_fake;
      discriminator_forward(disc, real, c_real);
      discriminator_forward(disc, fake, c_fake);
      const double d_loss = discriminator_loss(c_real.out, c_fake.out);

      disc.zero_grad();
      const double inv_m = 1.0 / static_cast<double>(idx.size());
      std::vector<double> seed_real(idx.size()), seed_fake(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        seed_real[j] = -inv_m / c_real.out[j];
        seed_fake[j] = inv_m / (1.0 - c_fake.out[j]);
      }
      discriminator_backward(disc, c_real, seed_real, nullptr, true);
      discriminator_backward(disc, c_fake, seed_fake, nullptr, true);

      // gp_weight 0 turns the penalty off entirely (no forward, no grads)
      const double gp = config.gp_weight != 0.0
                            ? gradient_penalty(disc, real, fake, rng, config.gp_weight)
                            : 0.0;
      const double total = d_loss + config.gp_weight * gp;
      if (!std::isfinite(total)) {
        abort("non-finite discriminator objective");
        break;
      }
      if (!opt_d.step()) {
        abort("non-finite discriminator gradient");
        break;
      }

      TraceRow row;
      row.disc_step = ++disc_step_count;
      row.gen_step = g_step;
      row.d_loss = d_loss;
      row.gp_loss = gp;
      row.total_loss = total;
      row.gen_loss = std::numeric_limits<double>::quiet_NaN();
      row.seconds = elapsed_seconds(t0);
      row.theta_fp_d = fnv1a_doubles(theta.data);
      trace.rows.push_back(row);
    }
    if (trace.aborted) break;

    const Matrix theta_g = sample_dirichlet_batch(
        prior, rng, static_cast<std::size_t>(config.batch_size));
    GeneratorCache gcache;
    const Matrix fake = generator_forward(gen, theta_g, NormMode::kTraining, &gcache);
    DiscriminatorCache c_fake;
    discriminator_forward(disc, fake, c_fake);
    const double g_loss = generator_loss(c_fake.out, config.non_saturating_gen_loss);
    if (!std::isfinite(g_loss)) {
      abort("non-finite generator objective");
      break;
    }

    gen.zero_grad();
    const double inv_m = 1.0 / static_cast<double>(config.batch_size);
    std::vector<double> seed(c_fake.out.size());
    for (std::size_t j = 0; j < seed.size(); ++j)
      seed[j] = config.non_saturating_gen_loss ? -inv_m / c_fake.out[j]
                                               : -inv_m / (1.0 - c_fake.out[j]);
    Matrix d_fake;
    discriminator_backward(disc, c_fake, seed, &d_fake, false);
    generator_backward(gen, gcache, d_fake);
    if (!opt_g.step()) {
      abort("non-finite generator gradient");
      break;
    }

    const std::uint64_t fp_g = fnv1a_doubles(theta_g.data);
    for (std::size_t r = round_begin; r < trace.rows.size(); ++r) {
      trace.rows[r].gen_loss = g_loss;
      trace.rows[r].theta_fp_g = fp_g;
    }
    gen_losses.push_back(g_loss);
    trace.gen_steps = g_step;

    const long w = config.convergence_window;
    if (static_cast<long>(gen_losses.size()) >= 2 * w) {
      const auto end = gen_losses.end();
      const double recent = std::accumulate(end - w, end, 0.0) / w;
      const double previous = std::accumulate(end - 2 * w, end - w, 0.0) / w;
      if (std::abs(recent - previous) <
          config.convergence_tol * std::max(std::abs(previous), 1e-8)) {
        trace.converged = true;
        break;
      }
    }
  }

  trace.disc_steps = disc_step_count;
  trace.seconds = elapsed_seconds(t0);
  trace.gen_params_fp = generator_fingerprint(gen);
  trace.disc_params_fp = discriminator_fingerprint(disc);
  return result;
}

void write_trace(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace: " + path);
  out << "iteration\td_loss\tgp_loss\ttotal_loss\tgen_loss\tseconds\n";
  char buf[512];
  for (const TraceRow& r : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%ld\t%.17g\t%.17g\t%.17g\t%.17g\t%.6f\n",
                  r.disc_step, r.d_loss, r.gp_loss, r.total_loss, r.gen_loss,
                  r.seconds);
    out << buf;
  }
}

}  // namespace aem
