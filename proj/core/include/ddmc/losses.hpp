#pragma once

#include <cstdint>
#include <vector>

#include "ddmc/model.hpp"
#include "ddmc/tensor.hpp"

namespace ddmc {

// Linear ramp from u_start to u_max over ramp_epochs, then flat. Epoch 0
// always reads u_start, so a zero-length ramp jumps at epoch 1.
struct CapacitySchedule {
  double u_start = 0.0;
  double u_max = 0.0;
  std::int64_t ramp_epochs = 0;

  double current(std::int64_t epoch) const;
};

// Gaussian log-likelihood with unit observation variance, additive
// constants dropped: -(1/N) * sum_i 0.5 * |x_i - xhat_i|^2. Zero at a
// perfect reconstruction, negative otherwise.
Tensor recon_loglik(const Tensor& x, const Tensor& xhat);

// Exact KL of the factorized posterior against the N(0, sigma0^2 I) prior,
// averaged over the batch:
// (1/N) * sum_{i,j} [log(sigma0/sigma_ij) + (sigma_ij^2 + mu_ij^2)/(2 sigma0^2) - 1/2].
Tensor kl_gaussian(const GaussianPosterior& post, double sigma0);

// Categorical KL of one aspect row against the uniform prior over its m
// entries: sum_m c_m log c_m + log m, with 0 log 0 = 0.
Tensor kl_aspect(const Tensor& c_row);

// Per-representation loss pieces, all scalars living on the current tape.
struct FineTerms {
  Tensor recon;  // log-likelihood (recon_loglik output)
  Tensor kl_z;
  Tensor kl_c;
};

// Rescaled coefficients beta_k = beta * |recon_k| / max_j |recon_j|. The
// best-reconstructing representation gets exactly beta; if every term is
// zero the ratio degenerates and all representations get beta.
std::vector<Tensor> beta_weights(const std::vector<Tensor>& recon_logliks,
                                 double beta);

// Capacity-controlled objective, minimization form:
// sum_k [ -recon_k + beta_k * |kl_z,k - u_z| + beta_k * |kl_c,k - u_c| ].
// When betas_out is given it receives the k coefficient tensors for
// logging.
Tensor fine_loss(const std::vector<FineTerms>& terms, double beta, double u_z,
                 double u_c, std::vector<Tensor>* betas_out = nullptr);

}  // namespace ddmc
