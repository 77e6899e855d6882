#include "ddmc/model.hpp"

#include <cmath>

#include "ddmc/errors.hpp"

namespace ddmc {

Mlp make_mlp(const std::vector<std::int64_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("make_mlp: need at least two widths");
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = widths[l], out = widths[l + 1];
    if (in < 1 || out < 1) throw ConfigError("make_mlp: widths must be positive");
    std::vector<double> w(std::size_t(in * out));
    const double s = 1.0 / std::sqrt(double(in));
    for (auto& v : w) v = rng.normal() * s;
    net.layers.push_back({Tensor::param({in, out}, std::move(w)),
                          Tensor::param({1, out},
                                        std::vector<double>(std::size_t(out), 0.0))});
  }
  return net;
}

Tensor mlp_forward(const Mlp& net, const Tensor& x) {
  if (net.layers.empty()) throw ConfigError("mlp_forward: empty network");
  Tensor h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    h = add(matmul(h, net.layers[l].w), net.layers[l].b);
    if (l + 1 < net.layers.size()) h = tanh(h);
  }
  return h;
}

GaussianPosterior encode(const EncoderParams& enc, const Tensor& xk,
                         double sigma0) {
  if (!(sigma0 > 0.0)) throw ConfigError("encode: sigma0 must be positive");
  if (xk.shape()[1] != enc.d_in)
    throw DimensionError("encode: batch width does not match encoder input");
  const Tensor out = mlp_forward(enc.net, xk);
  const auto dz = enc.d_z;
  GaussianPosterior post;
  post.mu = slice_cols(out, 0, dz);
  const Tensor b = slice_cols(out, dz, 2 * dz);
  post.sigma = scale(exp(scale(b, -0.5)), sigma0);
  return post;
}

Tensor sample_latent(const GaussianPosterior& post, const Tensor& noise) {
  if (noise.shape() != post.mu.shape())
    throw DimensionError("sample_latent: noise shape does not match posterior");
  return add(post.mu, mul(post.sigma, noise));
}

AspectLogits make_aspect_logits(int k, double tau) {
  if (k < 1) throw ConfigError("make_aspect_logits: k must be at least 1");
  if (!(tau > 0.0 && tau <= 2.0))
    throw ConfigError("make_aspect_logits: tau must lie in (0, 2]");
  AspectLogits a;
  a.raw = Tensor::param({1, k}, std::vector<double>(std::size_t(k), 0.0));
  a.tau = tau;
  return a;
}

Tensor sample_aspect(const AspectLogits& logits, int k,
                     const std::vector<double>& gumbel) {
  if (!(logits.tau > 0.0))
    throw ConfigError("sample_aspect: tau must be positive");
  const auto kk = logits.raw.shape()[1];
  if (k < 0 || k >= kk)
    throw DimensionError("sample_aspect: representation index out of range");
  const auto m = std::int64_t(gumbel.size());
  if (m < 1) throw DimensionError("sample_aspect: need at least one aspect");

  const Tensor rk = slice_cols(logits.raw, k, k + 1);  // {1,1}
  const Tensor g = Tensor::from({1, m}, gumbel);
  const Tensor scaled = scale(add(g, rk), 1.0 / logits.tau);
  return softmax(scaled, 1);
}

AspectAssignment sample_aspects(const AspectLogits& logits, int m, Rng& rng) {
  if (m < 1) throw ConfigError("sample_aspects: need at least one aspect");
  const auto k = logits.raw.shape()[1];
  AspectAssignment out;
  out.gumbels.reserve(std::size_t(k * m));
  for (std::int64_t i = 0; i < k; ++i) {
    std::vector<double> g(static_cast<std::size_t>(m));
    for (auto& v : g) v = rng.gumbel();
    out.gumbels.insert(out.gumbels.end(), g.begin(), g.end());
    out.rows.push_back(sample_aspect(logits, int(i), g));
  }
  return out;
}

Tensor decode(const DecoderParams& dec, const Tensor& z, const Tensor& ck) {
  if (z.shape()[1] != dec.d_z)
    throw DimensionError("decode: latent width does not match decoder");
  if (ck.shape()[0] != 1 || ck.shape()[1] != dec.m)
    throw DimensionError("decode: aspect row has the wrong shape");
  const Tensor joint = concat_cols(z, tile_rows(ck, z.shape()[0]));
  return logistic(mlp_forward(dec.net, joint));
}

std::vector<std::pair<std::string, Tensor>> DdmcModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < encoder.net.layers.size(); ++l) {
    out.emplace_back("encoder.w" + std::to_string(l), encoder.net.layers[l].w);
    out.emplace_back("encoder.b" + std::to_string(l), encoder.net.layers[l].b);
  }
  for (std::size_t l = 0; l < decoder.net.layers.size(); ++l) {
    out.emplace_back("decoder.w" + std::to_string(l), decoder.net.layers[l].w);
    out.emplace_back("decoder.b" + std::to_string(l), decoder.net.layers[l].b);
  }
  out.emplace_back("aspect.raw", aspect.raw);
  out.emplace_back("mixing.raw", mixing.raw);
  return out;
}

std::vector<Tensor> DdmcModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

DdmcModel make_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.d_in < 1) throw ConfigError("make_model: d_in must be positive");
  if (shape.d_z < 1) throw ConfigError("make_model: d_z must be positive");
  if (shape.k < 1) throw ConfigError("make_model: k must be at least 1");
  if (shape.m < 1) throw ConfigError("make_model: m must be at least 1");
  if (!(shape.sigma0 > 0.0)) throw ConfigError("make_model: sigma0 must be positive");

  Rng enc_rng(derive_seed(seed, 1));
  Rng dec_rng(derive_seed(seed, 2));

  std::vector<std::int64_t> enc_widths = {shape.d_in};
  enc_widths.insert(enc_widths.end(), shape.hidden.begin(), shape.hidden.end());
  enc_widths.push_back(2 * shape.d_z);

  std::vector<std::int64_t> dec_widths = {shape.d_z + shape.m};
  dec_widths.insert(dec_widths.end(), shape.hidden.rbegin(), shape.hidden.rend());
  dec_widths.push_back(shape.d_in);

  DdmcModel model{shape,
                  EncoderParams{make_mlp(enc_widths, enc_rng), shape.d_in, shape.d_z},
                  DecoderParams{make_mlp(dec_widths, dec_rng), shape.d_z, shape.m,
                                shape.d_in},
                  make_aspect_logits(shape.k, shape.tau),
                  MixingWeights(shape.k)};
  return model;
}

Tensor gaussian_noise(Shape shape, Rng& rng) {
  std::vector<double> v(std::size_t(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace ddmc
