#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "ddmc/errors.hpp"
#include "ddmc/model.hpp"
#include "ddmc/rng.hpp"
#include "ddmc/tensor.hpp"

using namespace ddmc;

namespace {

Tensor random_batch(Rng& rng, std::int64_t n, std::int64_t d, double lo = 0.0,
                    double hi = 1.0) {
  std::vector<double> v(std::size_t(n * d));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from({n, d}, std::move(v));
}

// Hand-assembled single-layer encoder net with chosen weights and biases.
EncoderParams manual_encoder(std::int64_t d_in, std::int64_t d_z,
                             std::vector<double> w, std::vector<double> b) {
  Mlp net;
  net.layers.push_back({Tensor::param({d_in, 2 * d_z}, std::move(w)),
                        Tensor::param({1, 2 * d_z}, std::move(b))});
  return EncoderParams{std::move(net), d_in, d_z};
}

}  // namespace

TEST_CASE("zero-weight encoder reproduces its biases in mu and sigma") {
  const std::int64_t d_in = 3, d_z = 2;
  const double sigma0 = 0.2;
  // Biases: a = (0.7, -0.3), b = (0.0, 1.2).
  EncoderParams enc = manual_encoder(
      d_in, d_z, std::vector<double>(std::size_t(d_in * 2 * d_z), 0.0),
      {0.7, -0.3, 0.0, 1.2});
  Rng rng(3);
  Tensor x = random_batch(rng, 4, d_in);
  GaussianPosterior post = encode(enc, x, sigma0);
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(post.mu.data()[std::size_t(i * d_z + 0)] == 0.7);
    CHECK(post.mu.data()[std::size_t(i * d_z + 1)] == -0.3);
    // b = 0 gives sigma = sigma0 exactly; b = 1.2 gives sigma0*exp(-0.6).
    CHECK(post.sigma.data()[std::size_t(i * d_z + 0)] == sigma0);
    CHECK(post.sigma.data()[std::size_t(i * d_z + 1)] ==
          doctest::Approx(sigma0 * std::exp(-0.6)).epsilon(1e-12));
  }
}

TEST_CASE("encoder gradient matches finite differences") {
  const std::int64_t d_in = 5, d_z = 3;
  Rng rng(11);
  Tensor x = random_batch(rng, 4, d_in);
  Rng wrng(19);
  Tensor w0 = random_batch(wrng, d_in, 2 * d_z, -0.5, 0.5);

  auto with_weight = [&](const Tensor& w) {
    EncoderParams enc = manual_encoder(
        d_in, d_z, std::vector<double>(w.data().begin(), w.data().end()),
        std::vector<double>(std::size_t(2 * d_z), 0.0));
    enc.net.layers[0].w = w;
    return enc;
  };
  auto f = [&](const Tensor& w) { return mean(encode(with_weight(w), x, 0.2).mu); };
  CHECK(grad_check(f, w0, 1e-5) <= 1e-4);

  auto g = [&](const Tensor& w) { return mean(encode(with_weight(w), x, 0.2).sigma); };
  CHECK(grad_check(g, w0, 1e-5) <= 1e-4);
}

TEST_CASE("sample_latent reduces to mu at zero noise and matches sigma in spread") {
  const std::int64_t n = 10000, d_z = 3;
  std::vector<double> mu_dat(std::size_t(n * d_z));
  std::vector<double> sg_dat(std::size_t(n * d_z));
  const double mus[3] = {0.4, -1.0, 2.0};
  const double sgs[3] = {0.1, 0.5, 1.5};
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d_z; ++j) {
      mu_dat[std::size_t(i * d_z + j)] = mus[j];
      sg_dat[std::size_t(i * d_z + j)] = sgs[j];
    }
  GaussianPosterior post{Tensor::from({n, d_z}, mu_dat),
                         Tensor::from({n, d_z}, sg_dat)};

  Tensor zero_noise = Tensor::zeros({n, d_z});
  Tensor z0 = sample_latent(post, zero_noise);
  CHECK(z0.data() == post.mu.data());

  Rng rng(29);
  Tensor noise = gaussian_noise({n, d_z}, rng);
  Tensor z = sample_latent(post, noise);
  for (std::int64_t j = 0; j < d_z; ++j) {
    double var = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double dev = z.data()[std::size_t(i * d_z + j)] - mus[j];
      var += dev * dev;
    }
    var /= double(n);
    CHECK(std::abs(var - sgs[j] * sgs[j]) <= 0.05 * sgs[j] * sgs[j]);
  }
}

TEST_CASE("aspect rows are simplex points shaped by temperature") {
  AspectLogits hot = make_aspect_logits(3, 2.0);
  hot.tau = 100.0;  // stress the high-temperature limit past the config range
  const std::vector<double> g = {1.3, -0.4, 0.9, 2.1};
  Tensor row = sample_aspect(hot, 1, g);
  double sum = 0;
  for (double v : row.data()) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  for (double v : row.data()) CHECK(std::abs(v - 0.25) < 0.01);

  AspectLogits cold = make_aspect_logits(3, 0.01);
  Tensor sharp = sample_aspect(cold, 0, g);
  double mx = 0, ssum = 0;
  for (double v : sharp.data()) {
    mx = std::max(mx, v);
    ssum += v;
  }
  CHECK(std::abs(ssum - 1.0) <= 1e-12);
  CHECK(mx > 0.99);

  CHECK_THROWS_AS((void)make_aspect_logits(3, 0.0), ConfigError);
  CHECK_THROWS_AS((void)make_aspect_logits(3, -1.0), ConfigError);
  CHECK_THROWS_AS((void)make_aspect_logits(3, 2.5), ConfigError);
  CHECK_THROWS_AS((void)make_aspect_logits(0, 0.9), ConfigError);
}

TEST_CASE("sample_aspects is reproducible and records its draws") {
  AspectLogits logits = make_aspect_logits(4, 0.9);
  Rng r1(77), r2(77);
  AspectAssignment a = sample_aspects(logits, 3, r1);
  AspectAssignment b = sample_aspects(logits, 3, r2);
  REQUIRE(a.rows.size() == 4);
  CHECK(a.gumbels == b.gumbels);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a.rows[k].data() == b.rows[k].data());
    double sum = 0;
    for (double v : a.rows[k].data()) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    // Replaying the recorded draws reproduces the row exactly.
    std::vector<double> g(a.gumbels.begin() + std::int64_t(k) * 3,
                          a.gumbels.begin() + std::int64_t(k + 1) * 3);
    Tensor replay = sample_aspect(logits, int(k), g);
    CHECK(replay.data() == a.rows[k].data());
  }
}

TEST_CASE("decoder conditions on the aspect row") {
  const std::int64_t d_z = 4, m = 2, d_out = 6;
  Rng rng(5);
  Mlp zero;
  zero.layers.push_back({Tensor::param({d_z + m, d_out},
                                       std::vector<double>(std::size_t((d_z + m) * d_out), 0.0)),
                         Tensor::param({1, d_out},
                                       std::vector<double>(std::size_t(d_out), 0.0))});
  DecoderParams flat{std::move(zero), d_z, m, d_out};
  Tensor z = random_batch(rng, 3, d_z, -1.0, 1.0);
  Tensor c0 = Tensor::from({1, m}, {1.0, 0.0});
  Tensor mid = decode(flat, z, c0);
  for (double v : mid.data()) CHECK(v == 0.5);

  Rng mrng(9);
  Mlp live = make_mlp({d_z + m, 8, d_out}, mrng);
  DecoderParams dec{std::move(live), d_z, m, d_out};
  Tensor c1 = Tensor::from({1, m}, {0.0, 1.0});
  Tensor x0 = decode(dec, z, c0);
  Tensor x1 = decode(dec, z, c1);
  for (double v : x0.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  double diff = 0;
  for (std::size_t i = 0; i < x0.data().size(); ++i)
    diff = std::max(diff, std::abs(x0.data()[i] - x1.data()[i]));
  CHECK(diff > 1e-4);
}

TEST_CASE("one backward pass reaches encoder, decoder, and mixing logits") {
  ModelShape shape;
  shape.d_in = 12;
  shape.d_z = 4;
  shape.hidden = {8, 6};
  shape.k = 2;
  shape.m = 2;
  DdmcModel model = make_model(shape, 31);

  Rng rng(41);
  Tensor clean = random_batch(rng, 3, shape.d_in);
  Tensor augmented = random_batch(rng, 3, shape.d_in);
  Rng noise_rng(43), gumbel_rng(47);

  Tape tape;
  {
    TapeScope scope(tape);
    AspectAssignment aspects = sample_aspects(model.aspect, shape.m, gumbel_rng);
    Tensor total = Tensor::scalar(0.0);
    for (int k = 0; k < shape.k; ++k) {
      Tensor xk = mix(clean, augmented, model.mixing, k);
      GaussianPosterior post = encode(model.encoder, xk, shape.sigma0);
      Tensor z = sample_latent(post, gaussian_noise({3, shape.d_z}, noise_rng));
      Tensor xhat = decode(model.decoder, z, aspects.rows[std::size_t(k)]);
      total = add(total, mean(mul(xhat, xhat)));
    }
    tape.backward(total);
  }

  auto max_abs = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  CHECK(max_abs(model.encoder.net.layers[0].w.grad()) > 0.0);
  CHECK(max_abs(model.decoder.net.layers[0].w.grad()) > 0.0);
  CHECK(max_abs(model.mixing.raw.grad()) > 0.0);
  // The aspect row is shift-invariant in its logit, so that gradient is
  // identically zero up to round-off.
  CHECK(max_abs(model.aspect.raw.grad()) <= 1e-12);
}

TEST_CASE("shared encoder serves every representation") {
  ModelShape shape;
  shape.d_in = 10;
  shape.d_z = 3;
  shape.hidden = {6};
  shape.k = 2;
  DdmcModel model = make_model(shape, 13);
  Rng rng(17);
  Tensor x0 = random_batch(rng, 2, shape.d_in);
  Tensor x1 = random_batch(rng, 2, shape.d_in);

  const auto base0 = encode(model.encoder, x0, shape.sigma0).mu.data();
  const auto base1 = encode(model.encoder, x1, shape.sigma0).mu.data();

  // One in-place weight perturbation must move both branch outputs.
  model.encoder.net.layers[0].w.mutable_data()[0] += 0.5;
  const auto bumped0 = encode(model.encoder, x0, shape.sigma0).mu.data();
  const auto bumped1 = encode(model.encoder, x1, shape.sigma0).mu.data();
  CHECK(bumped0 != base0);
  CHECK(bumped1 != base1);
}

TEST_CASE("model construction is deterministic in its seed") {
  ModelShape shape;
  shape.d_in = 9;
  shape.d_z = 3;
  shape.hidden = {7, 5};
  DdmcModel a = make_model(shape, 101);
  DdmcModel b = make_model(shape, 101);
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  CHECK(pa.size() == 2 * 3 * 2 + 2);  // 3 layers each side, plus two logit rows
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.data() == pb[i].second.data());
  }

  Rng n1(5), n2(5);
  Tensor x = Tensor::full({2, 9}, 0.3);
  Tensor za = sample_latent(encode(a.encoder, x, shape.sigma0),
                            gaussian_noise({2, 3}, n1));
  Tensor zb = sample_latent(encode(b.encoder, x, shape.sigma0),
                            gaussian_noise({2, 3}, n2));
  CHECK(za.data() == zb.data());

  DdmcModel c = make_model(shape, 102);
  CHECK(c.encoder.net.layers[0].w.data() != a.encoder.net.layers[0].w.data());
}

TEST_CASE("full forward chain passes a finite-difference check") {
  ModelShape shape;
  shape.d_in = 8;
  shape.d_z = 3;
  shape.hidden = {6};
  shape.k = 1;
  shape.m = 2;
  DdmcModel model = make_model(shape, 59);
  Rng rng(61);
  Tensor x = random_batch(rng, 3, shape.d_in);
  Rng nrng(67);
  Tensor noise = gaussian_noise({3, shape.d_z}, nrng);
  Tensor ck = Tensor::from({1, 2}, {0.3, 0.7});

  auto f = [&](const Tensor& w) {
    EncoderParams enc = model.encoder;
    enc.net.layers[0].w = w;
    GaussianPosterior post = encode(enc, x, shape.sigma0);
    Tensor z = sample_latent(post, noise);
    return mean(decode(model.decoder, z, ck));
  };
  CHECK(grad_check(f, model.encoder.net.layers[0].w, 1e-5) <= 1e-4);

  auto g = [&](const Tensor& w) {
    DecoderParams dec = model.decoder;
    dec.net.layers[0].w = w;
    GaussianPosterior post = encode(model.encoder, x, shape.sigma0);
    Tensor z = sample_latent(post, noise);
    return mean(decode(dec, z, ck));
  };
  CHECK(grad_check(g, model.decoder.net.layers[0].w, 1e-5) <= 1e-4);
}

TEST_CASE("model construction validates its shape") {
  ModelShape shape;
  shape.d_in = 0;
  CHECK_THROWS_AS((void)make_model(shape, 1), ConfigError);
  shape.d_in = 4;
  shape.d_z = 0;
  CHECK_THROWS_AS((void)make_model(shape, 1), ConfigError);
  shape.d_z = 2;
  shape.sigma0 = 0.0;
  CHECK_THROWS_AS((void)make_model(shape, 1), ConfigError);
  shape.sigma0 = 0.2;
  shape.tau = 3.0;
  CHECK_THROWS_AS((void)make_model(shape, 1), ConfigError);
}
