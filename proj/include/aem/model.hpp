#pragma once

#include <array>
#include <vector>

#include "aem/corpus.hpp"
#include "aem/numerics.hpp"

namespace aem {

// ---------------------------------------------------------------------------
// Generator: event mix -> four softmax word distributions, concatenated.
//
//   hidden block   : dense (H x E) -> layer norm -> leaky relu
//   extra blocks   : dense (H x H) -> layer norm -> leaky relu (depth 4 or 5)
//   four subnets   : dense (V_f x H) -> batch norm -> softmax
//
// All four subnets read the same hidden output.
// ---------------------------------------------------------------------------
struct GeneratorSubnet {
  DenseLayer lin;
  BatchNorm bn;
};

struct GeneratorParams {
  int event_count = 0;   // E
  int hidden_width = 0;  // H
  int depth = 3;         // 3, 4 or 5 dense->norm->activation stages
  std::array<int, kNumFields> field_sizes{};
  double leaky_slope = kDefaultLeakySlope;

  DenseLayer hidden;
  LayerNorm hidden_ln;
  std::vector<DenseLayer> extra;      // depth - 3 entries
  std::vector<LayerNorm> extra_ln;
  std::array<GeneratorSubnet, kNumFields> subnets;

  int total_vocab() const {
    int v = 0;
    for (int s : field_sizes) v += s;
    return v;
  }
  void zero_grad();
};

struct GeneratorCache {
  Matrix event_mix;
  Matrix hidden_pre;  // before layer norm
  LayerNormCache hidden_ln;
  Matrix hidden_post_ln;
  Matrix hidden_out;  // after activation
  std::vector<Matrix> extra_pre, extra_post_ln, extra_out;
  std::vector<LayerNormCache> extra_ln;
  std::array<Matrix, kNumFields> sub_pre;
  std::array<BatchNormCache, kNumFields> sub_bn;
  std::array<Matrix, kNumFields> sub_norm;
  std::array<Matrix, kNumFields> sub_softmax;
  NormMode mode = NormMode::kTraining;

  const Matrix& last_hidden() const {
    return extra_out.empty() ? hidden_out : extra_out.back();
  }
};

// Rows of event_mix must lie on the simplex. Training mode uses batch
// statistics in the subnets (batch >= 2) and updates their running stats;
// inference mode reads running stats only. Returns the m x V fake batch.
Matrix generator_forward(GeneratorParams& gen, const Matrix& event_mix,
                         NormMode mode, GeneratorCache* cache);

// Accumulates parameter gradients from the upstream gradient on the
// concatenated output. Requires the cache of the matching forward call.
void generator_backward(GeneratorParams& gen, const GeneratorCache& cache,
                        const Matrix& d_output);

// ---------------------------------------------------------------------------
// Discriminator: input -> hidden -> feature layer -> scalar in (0,1).
// Every dense layer is spectrally normalized. The feature layer's
// activations are the discriminative features exported for visualization.
// ---------------------------------------------------------------------------
struct DiscriminatorParams {
  int input_dim = 0;     // V
  int feature_width = 0; // H_d
  double leaky_slope = kDefaultLeakySlope;
  bool use_spectral_norm = true;

  DenseLayer input_layer;    // H_d x V
  DenseLayer feature_layer;  // H_d x H_d
  DenseLayer output_layer;   // 1 x H_d

  void zero_grad();
  std::array<DenseLayer*, 3> layers() {
    return {&input_layer, &feature_layer, &output_layer};
  }
  std::array<const DenseLayer*, 3> layers() const {
    return {&input_layer, &feature_layer, &output_layer};
  }
};

struct DiscriminatorCache {
  Matrix x0;              // input batch
  Matrix z1, x1;          // first hidden pre/post activation
  Matrix z2, x2;          // feature layer pre/post; x2 = exported features
  std::vector<double> z3; // output pre-activation, one per row
  std::vector<double> out;  // clamped sigmoid, in (0,1)
};

// Runs the forward pass with the current weight views; refresh spectral
// state first (refresh_spectral) when training.
void discriminator_forward(const DiscriminatorParams& disc, const Matrix& x,
                           DiscriminatorCache& cache);

// Backward from d_loss/d_out (one entry per row). Accumulates parameter
// gradients when accumulate_params; writes the input gradient when dx is
// non-null.
void discriminator_backward(DiscriminatorParams& disc,
                            const DiscriminatorCache& cache,
                            std::span<const double> d_out_grad, Matrix* dx,
                            bool accumulate_params);

// Per-row gradient of the scalar output w.r.t. the input, as a matrix the
// same shape as x. This is the gradient the penalty term measures.
Matrix discriminator_input_gradient(const DiscriminatorParams& disc,
                                    const DiscriminatorCache& cache);

// Second-order path: accumulates d/d(params) of sum_j v_j . grad_x out_j
// into the parameter gradients, with v given row-wise. cache must come from
// the forward pass on the same inputs.
void discriminator_grad_dot_backward(DiscriminatorParams& disc,
                                     const DiscriminatorCache& cache,
                                     const Matrix& v);

// One power-iteration refresh per dense layer (no-op when spectral
// normalization is disabled).
void refresh_spectral(DiscriminatorParams& disc, int iterations);

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------
struct ModelShape {
  int event_count = 15;
  int hidden_width = 200;
  int disc_width = 200;
  int depth = 3;
  std::array<int, kNumFields> field_sizes{};
  double leaky_slope = kDefaultLeakySlope;
  bool use_spectral_norm = true;
};

GeneratorParams init_generator(const ModelShape& shape, Rng& rng);
DiscriminatorParams init_discriminator(const ModelShape& shape, Rng& rng);

// Validates the shape (E >= 2, H >= 1, V >= 4, depth in {3,4,5}) and builds
// both networks from one rng stream.
std::pair<GeneratorParams, DiscriminatorParams> init_model(const ModelShape& shape,
                                                           Rng& rng);

std::uint64_t generator_fingerprint(const GeneratorParams& gen);
std::uint64_t discriminator_fingerprint(const DiscriminatorParams& disc);

}  // namespace aem
