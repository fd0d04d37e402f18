#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aem/model.hpp"

namespace aem {

struct TrainConfig {
  int event_count = 15;        // E: latent events
  int hidden_width = 200;      // H
  int disc_width = 200;        // H_d
  int generator_depth = 3;     // 3 | 4 | 5
  double gp_weight = 10.0;     // gradient-penalty coefficient
  int disc_steps = 5;          // discriminator updates per generator update
  int batch_size = 32;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::vector<double> dirichlet_alpha;  // empty -> all ones
  long max_gen_steps = 3000;
  std::uint64_t seed = 1;
  int convergence_window = 100;
  double convergence_tol = 1e-3;
  bool use_spectral_norm = true;
  int power_iterations = 1;
  bool non_saturating_gen_loss = false;

  // Collects every problem instead of stopping at the first one.
  std::vector<std::string> validate(std::size_t corpus_rows,
                                    std::size_t corpus_cols) const;
};

struct TraceRow {
  long disc_step = 0;   // global discriminator update index, 1-based
  long gen_step = 0;    // generator round this update belongs to, 1-based
  double d_loss = 0.0;
  double gp_loss = 0.0;
  double total_loss = 0.0;  // d_loss + gp_weight * gp_loss
  double gen_loss = 0.0;    // loss of the round's generator update
  double seconds = 0.0;     // wall clock since training start
  std::uint64_t theta_fp_d = 0;  // fingerprint of this step's noise batch
  std::uint64_t theta_fp_g = 0;  // fingerprint of the round's generator noise
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
  long gen_steps = 0;
  long disc_steps = 0;
  double seconds = 0.0;
  std::uint64_t gen_params_fp = 0;
  std::uint64_t disc_params_fp = 0;
};

struct TrainResult {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  TrainTrace trace;
};

// Mean over the batch of -log D(real) - log(1 - D(fake)). Inputs must
// already lie in (0,1); the sigmoid clamp upstream guarantees it.
double discriminator_loss(std::span<const double> d_out_real,
                          std::span<const double> d_out_fake);

// Mean of log(1 - D(fake)) (the minimax form, minimized by the generator),
// or -mean log D(fake) when non_saturating.
double generator_loss(std::span<const double> d_out_fake,
                      bool non_saturating = false);

// mean((||g|| - 1)^2) over per-sample input-gradient norms.
double penalty_from_grad_norms(std::span<const double> norms);

// Per-sample interpolates eps*real + (1-eps)*fake, eps ~ U[0,1] drawn
// independently per row.
Matrix interpolate_pairs(const Matrix& real, const Matrix& fake, Rng& rng);

// Full penalty: interpolates, measures the input-gradient norm of the
// discriminator at each interpolate, and returns mean((norm-1)^2). When
// grad_scale != 0, d(grad_scale * penalty)/d(params) is accumulated into the
// discriminator's gradients (the second-order path).
double gradient_penalty(DiscriminatorParams& disc, const Matrix& real,
                        const Matrix& fake, Rng& rng, double grad_scale = 0.0);

// The adversarial loop: disc_steps discriminator updates per generator
// update, real batches by epoch shuffling, fresh Dirichlet noise per step,
// Adam on both players. Deterministic given the seed. Stops at max_gen_steps
// or when the windowed mean generator loss settles.
TrainResult train(const Matrix& corpus_matrix, const TrainConfig& config);

void write_trace(const TrainTrace& trace, const std::string& path);

}  // namespace aem
