#include "ddmc/losses.hpp"

#include <cmath>

#include "ddmc/errors.hpp"

namespace ddmc {

double CapacitySchedule::current(std::int64_t epoch) const {
  if (u_start < 0.0 || u_max < u_start || ramp_epochs < 0)
    throw ConfigError("CapacitySchedule: need 0 <= u_start <= u_max and ramp >= 0");
  if (epoch <= 0) return u_start;
  const double t = ramp_epochs == 0
                       ? 1.0
                       : std::min(1.0, double(epoch) / double(ramp_epochs));
  return u_start + (u_max - u_start) * t;
}

Tensor recon_loglik(const Tensor& x, const Tensor& xhat) {
  if (x.shape() != xhat.shape())
    throw DimensionError("recon_loglik: shapes differ");
  const Tensor d = sub(x, xhat);
  return scale(sum(mul(d, d)), -0.5 / double(x.shape()[0]));
}

Tensor kl_gaussian(const GaussianPosterior& post, double sigma0) {
  if (!(sigma0 > 0.0)) throw ConfigError("kl_gaussian: sigma0 must be positive");
  if (post.mu.shape() != post.sigma.shape())
    throw DimensionError("kl_gaussian: mu and sigma shapes differ");
  const double n = double(post.mu.shape()[0]);
  // Per entry: log sigma0 - log sigma + (sigma^2 + mu^2) / (2 sigma0^2) - 1/2.
  const Tensor shift = Tensor::scalar(std::log(sigma0) - 0.5);
  const Tensor quad = scale(add(mul(post.sigma, post.sigma), mul(post.mu, post.mu)),
                            1.0 / (2.0 * sigma0 * sigma0));
  const Tensor per_entry = add(sub(quad, log(post.sigma)), shift);
  return scale(sum(per_entry), 1.0 / n);
}

Tensor kl_aspect(const Tensor& c_row) {
  const auto m = c_row.numel();
  if (m < 1) throw DimensionError("kl_aspect: empty row");
  return add(sum(xlogx(c_row)), Tensor::scalar(std::log(double(m))));
}

std::vector<Tensor> beta_weights(const std::vector<Tensor>& recon_logliks,
                                 double beta) {
  if (recon_logliks.empty())
    throw ConfigError("beta_weights: need at least one term");
  if (!(beta > 0.0)) throw ConfigError("beta_weights: beta must be positive");

  std::vector<Tensor> mags;
  mags.reserve(recon_logliks.size());
  for (const auto& r : recon_logliks) {
    if (!r.is_scalar())
      throw DimensionError("beta_weights: reconstruction terms must be scalars");
    mags.push_back(abs(r));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < mags.size(); ++i)
    if (mags[i].value() > mags[best].value()) best = i;

  std::vector<Tensor> out;
  out.reserve(mags.size());
  if (mags[best].value() == 0.0) {
    // Every reconstruction is perfect; the ratio is 0/0, so fall back to
    // the base coefficient everywhere.
    for (std::size_t i = 0; i < mags.size(); ++i)
      out.push_back(Tensor::scalar(beta));
    return out;
  }
  for (std::size_t i = 0; i < mags.size(); ++i)
    out.push_back(scale(div(mags[i], mags[best]), beta));
  return out;
}

Tensor fine_loss(const std::vector<FineTerms>& terms, double beta, double u_z,
                 double u_c, std::vector<Tensor>* betas_out) {
  if (terms.empty()) throw ConfigError("fine_loss: need at least one term");
  if (u_z < 0.0 || u_c < 0.0)
    throw ConfigError("fine_loss: capacities must be nonnegative");

  std::vector<Tensor> recons;
  recons.reserve(terms.size());
  for (const auto& t : terms) recons.push_back(t.recon);
  const auto betas = beta_weights(recons, beta);
  if (betas_out) *betas_out = betas;

  const Tensor uz = Tensor::scalar(u_z);
  const Tensor uc = Tensor::scalar(u_c);
  Tensor total;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const Tensor z_pressure = mul(betas[k], abs(sub(terms[k].kl_z, uz)));
    const Tensor c_pressure = mul(betas[k], abs(sub(terms[k].kl_c, uc)));
    const Tensor part = add(neg(terms[k].recon), add(z_pressure, c_pressure));
    total = k == 0 ? part : add(total, part);
  }
  return total;
}

}  // namespace ddmc
