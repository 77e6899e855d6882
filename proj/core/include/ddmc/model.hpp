#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddmc/augment.hpp"
#include "ddmc/rng.hpp"
#include "ddmc/tensor.hpp"

namespace ddmc {

// Fully connected stack with tanh between layers and a linear last layer.
// Weights are {in,out}, biases are {1,out} rows broadcast across the batch.
struct MlpLayer {
  Tensor w;
  Tensor b;
};

struct Mlp {
  std::vector<MlpLayer> layers;
};

// widths = {d_in, h1, ..., d_out}. Weights start at N(0, 1/fan_in) so early
// activations stay O(1); biases start at zero.
Mlp make_mlp(const std::vector<std::int64_t>& widths, Rng& rng);
Tensor mlp_forward(const Mlp& net, const Tensor& x);

// One encoder serves every representation; it maps a batch to 2*d_z values
// that split into the posterior mean and the log-variance offset.
struct EncoderParams {
  Mlp net;
  std::int64_t d_in = 0;
  std::int64_t d_z = 0;
};

struct GaussianPosterior {
  Tensor mu;     // {n, d_z}
  Tensor sigma;  // {n, d_z}, strictly positive by construction
};

// mu = a, sigma = sigma0 * exp(-b/2) where (a, b) is the split encoder
// output. sigma0 is also the prior scale, so b = 0 means posterior width
// equals the prior's.
GaussianPosterior encode(const EncoderParams& enc, const Tensor& xk,
                         double sigma0);

// Reparameterized draw z = mu + sigma * noise with externally supplied
// standard normal noise, keeping the sample differentiable through the
// posterior parameters.
Tensor sample_latent(const GaussianPosterior& post, const Tensor& noise);

// Shared trainable aspect scores, one per representation, kept as logits
// (the positive score is exp(raw)).
struct AspectLogits {
  Tensor raw;        // {1, k}
  double tau = 0.9;  // softmax temperature, (0, 2]
};

AspectLogits make_aspect_logits(int k, double tau);

// Relaxed one-hot assignment of representation k to one of m aspects:
// softmax over ((raw_k + gumbel_j) / tau). Every entry of the logit row
// shares the same raw_k, so the value depends only on the noise, but the
// row stays on the tape for an honest gradient.
Tensor sample_aspect(const AspectLogits& logits, int k,
                     const std::vector<double>& gumbel);

// All k rows with freshly drawn noise; the draws are kept so a forward
// pass can be replayed exactly.
struct AspectAssignment {
  std::vector<Tensor> rows;     // k tensors of shape {1, m}
  std::vector<double> gumbels;  // k*m draws, row-major
};

AspectAssignment sample_aspects(const AspectLogits& logits, int m, Rng& rng);

// One decoder serves every representation; input is z concatenated with
// that representation's aspect row, output is a logistic pixel batch.
struct DecoderParams {
  Mlp net;
  std::int64_t d_z = 0;
  std::int64_t m = 0;
  std::int64_t d_out = 0;
};

Tensor decode(const DecoderParams& dec, const Tensor& z, const Tensor& ck);

struct ModelShape {
  std::int64_t d_in = 0;
  std::int64_t d_z = 16;
  std::vector<std::int64_t> hidden = {256, 128};  // encoder; decoder mirrors
  int k = 2;    // representations
  int m = 2;    // aspects (expected clusterings)
  double tau = 0.9;
  double sigma0 = 0.2;
};

struct DdmcModel {
  ModelShape shape;
  EncoderParams encoder;
  DecoderParams decoder;
  AspectLogits aspect;
  MixingWeights mixing;

  // Stable enumeration order: encoder layers, decoder layers, aspect
  // logits, mixing logits. Optimizers and checkpoints both rely on it.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

DdmcModel make_model(const ModelShape& shape, std::uint64_t seed);

// Convenience constant tensor of seeded standard normal draws.
Tensor gaussian_noise(Shape shape, Rng& rng);

}  // namespace ddmc
