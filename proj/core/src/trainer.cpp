#include "ddmc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "ddmc/errors.hpp"
#include "ddmc/losses.hpp"

namespace ddmc {
namespace {

double dist2(const double* a, const double* b, std::int64_t d) {
  double s = 0;
  for (std::int64_t j = 0; j < d; ++j) {
    const double dv = a[j] - b[j];
    s += dv * dv;
  }
  return s;
}

std::vector<double> gather_rows(const std::vector<double>& src,
                                const std::vector<std::int64_t>& idx,
                                std::int64_t d) {
  std::vector<double> out;
  out.resize(idx.size() * std::size_t(d));
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data() + idx[i] * d, d, out.data() + std::int64_t(i) * d);
  return out;
}

void check_finite(double v, const char* term, std::int64_t epoch,
                  std::size_t batch) {
  if (!std::isfinite(v))
    throw NumericError("non-finite " + std::string(term) + " at epoch " +
                       std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
}

}  // namespace

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].data().size(), 0.0);
    v_[i].assign(params_[i].data().size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;  // untouched by this backward pass
    const auto& g = params_[i].grad();
    auto& val = params_[i].mutable_data();
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double grad = g[j] + cfg_.weight_decay * val[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * grad;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * grad * grad;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

const std::vector<double>& Adam::first_moment(std::size_t param_index) const {
  return m_.at(param_index);
}

std::vector<double> kmeans_init(const std::vector<double>& z, std::int64_t n,
                                std::int64_t d, int t, std::uint64_t seed) {
  if (t < 1) throw ConfigError("kmeans_init: need at least one cluster");
  if (n < t) throw ConfigError("kmeans_init: fewer points than clusters");
  if (std::int64_t(z.size()) != n * d)
    throw DimensionError("kmeans_init: data size does not match n*d");

  Rng rng(seed);
  std::vector<double> centers(std::size_t(t) * std::size_t(d));
  auto center = [&](int c) { return centers.data() + std::int64_t(c) * d; };
  auto point = [&](std::int64_t i) { return z.data() + i * d; };

  // Distance-weighted seeding: each new center is drawn proportional to
  // the squared distance from the centers chosen so far.
  std::copy_n(point(std::int64_t(rng.next_below(std::uint64_t(n)))), d, center(0));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) d2[std::size_t(i)] = dist2(point(i), center(0), d);
  for (int c = 1; c < t; ++c) {
    double total = 0;
    for (double v : d2) total += v;
    std::int64_t pick = 0;
    if (total > 0) {
      const double r = rng.uniform() * total;
      double acc = 0;
      pick = n - 1;
      for (std::int64_t i = 0; i < n; ++i) {
        acc += d2[std::size_t(i)];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::int64_t(rng.next_below(std::uint64_t(n)));
    }
    std::copy_n(point(pick), d, center(c));
    for (std::int64_t i = 0; i < n; ++i)
      d2[std::size_t(i)] = std::min(d2[std::size_t(i)], dist2(point(i), center(c), d));
  }

  std::vector<int> labels(std::size_t(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<int> next = assign(z, n, d, centers, t);

    // Repair empty clusters by stealing the globally farthest point.
    std::vector<std::int64_t> counts(std::size_t(t), 0);
    for (int l : next) ++counts[std::size_t(l)];
    for (int c = 0; c < t; ++c) {
      if (counts[std::size_t(c)] > 0) continue;
      std::int64_t far = 0;
      double best = -1.0;
      for (std::int64_t i = 0; i < n; ++i) {
        if (counts[std::size_t(next[std::size_t(i)])] <= 1) continue;  // keep donors nonempty
        const double dd = dist2(point(i), center(next[std::size_t(i)]), d);
        if (dd > best) {
          best = dd;
          far = i;
        }
      }
      --counts[std::size_t(next[std::size_t(far)])];
      next[std::size_t(far)] = c;
      ++counts[std::size_t(c)];
    }

    if (next == labels) break;
    labels = std::move(next);

    std::fill(centers.begin(), centers.end(), 0.0);
    std::vector<std::int64_t> sz(std::size_t(t), 0);
    for (std::int64_t i = 0; i < n; ++i) {
      const int c = labels[std::size_t(i)];
      ++sz[std::size_t(c)];
      for (std::int64_t j = 0; j < d; ++j) center(c)[j] += point(i)[j];
    }
    for (int c = 0; c < t; ++c)
      for (std::int64_t j = 0; j < d; ++j)
        center(c)[j] /= double(sz[std::size_t(c)]);
  }
  return centers;
}

std::vector<int> assign(const std::vector<double>& z, std::int64_t n,
                        std::int64_t d, const std::vector<double>& centers,
                        int t) {
  if (std::int64_t(centers.size()) != std::int64_t(t) * d)
    throw DimensionError("assign: centers size does not match t*d");
  if (std::int64_t(z.size()) != n * d)
    throw DimensionError("assign: data size does not match n*d");
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = dist2(z.data() + i * d, centers.data(), d);
    for (int c = 1; c < t; ++c) {
      const double dd = dist2(z.data() + i * d, centers.data() + std::int64_t(c) * d, d);
      if (dd < bd) {  // strict: ties keep the lowest index
        bd = dd;
        best = c;
      }
    }
    labels[std::size_t(i)] = best;
  }
  return labels;
}

Tensor cluster_loss(const Tensor& z, const std::vector<double>& centers,
                    const std::vector<int>& labels, int t) {
  const auto n = z.shape()[0], d = z.shape()[1];
  if (std::int64_t(centers.size()) != std::int64_t(t) * d)
    throw DimensionError("cluster_loss: centers size does not match t*d");
  if (std::int64_t(labels.size()) != n)
    throw DimensionError("cluster_loss: one label per row required");
  std::vector<double> picked(std::size_t(n * d));
  for (std::int64_t i = 0; i < n; ++i) {
    const int l = labels[std::size_t(i)];
    if (l < 0 || l >= t) throw DimensionError("cluster_loss: label out of range");
    std::copy_n(centers.data() + std::int64_t(l) * d, d, picked.data() + i * d);
  }
  const Tensor ws = Tensor::from({n, d}, std::move(picked));
  const Tensor diff = sub(z, ws);
  return scale(sum(mul(diff, diff)), 1.0 / double(n));
}

StopResult stopping_criterion(const std::vector<std::vector<int>>& curr,
                              const std::vector<std::vector<int>>& prev,
                              double delta) {
  if (curr.size() != prev.size())
    throw DimensionError("stopping_criterion: representation counts differ");
  std::int64_t total = 0, changed = 0;
  for (std::size_t k = 0; k < curr.size(); ++k) {
    if (curr[k].size() != prev[k].size())
      throw DimensionError("stopping_criterion: assignment lengths differ");
    total += std::int64_t(curr[k].size());
    for (std::size_t i = 0; i < curr[k].size(); ++i)
      if (curr[k][i] != prev[k][i]) ++changed;
  }
  if (total == 0) throw DimensionError("stopping_criterion: empty assignments");
  StopResult r;
  // Integer counting keeps the boundary exact: 1 change in 2000 rows gives
  // value == 0.0005 and a threshold of 0.0005 must not fire.
  r.value = double(changed) / double(total);
  r.stop = r.value < delta;
  return r;
}

Trainer::Trainer(const RunConfig& cfg, const MultiClusteringDataset& ds)
    : cfg_((validate_config(cfg), cfg)),
      ds_(ds),
      model_(make_model(
          ModelShape{ds.dim(), cfg.d_z, cfg.hidden, cfg.k, cfg.m, cfg.tau,
                     cfg.sigma0},
          derive_seed(cfg.seed, 100))),
      clusters_(),
      opt_([&] {
        std::vector<Tensor> params;
        for (auto& [name, p] : model_.named_parameters()) {
          // The mixing logits stay frozen when mixing is off, fixed, or the
          // whole coarse path is disabled.
          if (name == "mixing.raw" &&
              (cfg.fixed_mix_w || !cfg.mixing_enabled || !cfg.coarse_enabled))
            continue;
          params.push_back(p);
        }
        return Adam(std::move(params),
                    AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
      }()),
      rng_(derive_seed(cfg.seed, 102)) {
  if (ds_.n < 1) throw ConfigError("trainer: empty dataset");
  if (ds_.n < cfg_.t) throw ConfigError("trainer: fewer samples than clusters");

  clusters_.t = cfg_.t;
  clusters_.d_z = cfg_.d_z;

  // One shuffled partition, reused every epoch, so an epoch's objective is
  // a fixed function of the parameters.
  std::vector<std::int64_t> order(std::size_t(ds_.n));
  for (std::int64_t i = 0; i < ds_.n; ++i) order[std::size_t(i)] = i;
  Rng brng(derive_seed(cfg_.seed, 101));
  for (std::int64_t i = ds_.n - 1; i > 0; --i) {
    const auto j = std::int64_t(brng.next_below(std::uint64_t(i + 1)));
    std::swap(order[std::size_t(i)], order[std::size_t(j)]);
  }
  for (std::int64_t start = 0; start < ds_.n; start += cfg_.batch_size) {
    const auto end = std::min(ds_.n, start + cfg_.batch_size);
    batches_.emplace_back(order.begin() + start, order.begin() + end);
  }
  // A trailing 1-sample batch cannot feed the dependence term; merge it.
  if (batches_.size() > 1 && batches_.back().size() < 2) {
    auto tail = batches_.back();
    batches_.pop_back();
    batches_.back().insert(batches_.back().end(), tail.begin(), tail.end());
  }

  if (cfg_.coarse_enabled) {
    pipelines_ = sample_pipelines(cfg_.k, cfg_.aug_seed);
    rebuild_aug_cache(0);
  }
}

void Trainer::rebuild_aug_cache(std::uint64_t epoch_salt) {
  aug_cache_.assign(std::size_t(cfg_.k), {});
  for (int k = 0; k < cfg_.k; ++k) {
    AugmentationPipeline p = pipelines_[std::size_t(k)];
    if (epoch_salt != 0) p.seed = derive_seed(p.seed, epoch_salt);
    aug_cache_[std::size_t(k)] =
        apply_pipeline(p, ds_.images, ds_.n, ds_.h, ds_.w, ds_.c);
  }
}

EpochRecord Trainer::e_epoch(std::int64_t epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg_.coarse_enabled && cfg_.resample_aug)
    rebuild_aug_cache(1000 + std::uint64_t(epoch));

  const double u_z = z_capacity(cfg_).current(epoch);
  const double u_c = c_capacity(cfg_).current(epoch);
  const auto d = ds_.dim();
  const bool cluster_on = cfg_.cluster_assign_enabled && clusters_.initialized;

  EpochRecord rec;
  rec.epoch = epoch;
  rec.phase = 'E';
  rec.u_z = u_z;
  rec.u_c = u_c;
  rec.recon.assign(std::size_t(cfg_.k), 0.0);
  rec.kl_z.assign(std::size_t(cfg_.k), 0.0);
  rec.kl_c.assign(std::size_t(cfg_.k), 0.0);
  rec.beta_k.assign(std::size_t(cfg_.k), 0.0);

  for (std::size_t b = 0; b < batches_.size(); ++b) {
    const auto& idx = batches_[b];
    const auto bn = std::int64_t(idx.size());

    try {
    Tape tape;
    TapeScope scope(tape);

    const Tensor x = Tensor::from({bn, d}, gather_rows(ds_.images, idx, d));
    std::vector<Tensor> mixed;
    mixed.reserve(std::size_t(cfg_.k));
    for (int k = 0; k < cfg_.k; ++k) {
      if (!cfg_.coarse_enabled) {
        mixed.push_back(x);
      } else {
        const Tensor xa = Tensor::from(
            {bn, d}, gather_rows(aug_cache_[std::size_t(k)], idx, d));
        mixed.push_back(cfg_.mixing_enabled ? mix(x, xa, model_.mixing, k) : xa);
      }
    }

    const AspectAssignment aspects = sample_aspects(model_.aspect, cfg_.m, rng_);

    std::vector<FineTerms> terms;
    std::vector<Tensor> latents;
    terms.reserve(std::size_t(cfg_.k));
    latents.reserve(std::size_t(cfg_.k));
    for (int k = 0; k < cfg_.k; ++k) {
      const GaussianPosterior post =
          encode(model_.encoder, mixed[std::size_t(k)], cfg_.sigma0);
      const Tensor noise = gaussian_noise({bn, cfg_.d_z}, rng_);
      const Tensor z = sample_latent(post, noise);
      const Tensor xhat = decode(model_.decoder, z, aspects.rows[std::size_t(k)]);
      latents.push_back(z);
      terms.push_back({recon_loglik(mixed[std::size_t(k)], xhat),
                       kl_gaussian(post, cfg_.sigma0),
                       kl_aspect(aspects.rows[std::size_t(k)])});
    }

    std::vector<Tensor> betas;
    const Tensor fine = fine_loss(terms, cfg_.beta, u_z, u_c, &betas);
    const Tensor coarse = (cfg_.coarse_enabled && cfg_.k >= 2)
                              ? coarse_loss(mixed)
                              : Tensor::scalar(0.0);

    Tensor cluster_term = Tensor::scalar(0.0);
    if (cluster_on) {
      for (int k = 0; k < cfg_.k; ++k) {
        std::vector<int> blabels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
          blabels[i] = clusters_.assignments[std::size_t(k)][std::size_t(idx[i])];
        const Tensor cl = cluster_loss(latents[std::size_t(k)],
                                       clusters_.centers[std::size_t(k)],
                                       blabels, cfg_.t);
        cluster_term = k == 0 ? cl : add(cluster_term, cl);
      }
    }

    const Tensor total = add(add(coarse, fine), cluster_term);

    check_finite(coarse.value(), "pairwise dependence loss", epoch, b);
    for (int k = 0; k < cfg_.k; ++k) {
      check_finite(terms[std::size_t(k)].recon.value(), "reconstruction term", epoch, b);
      check_finite(terms[std::size_t(k)].kl_z.value(), "latent KL term", epoch, b);
      check_finite(terms[std::size_t(k)].kl_c.value(), "aspect KL term", epoch, b);
    }
    check_finite(cluster_term.value(), "cluster assignment loss", epoch, b);
    check_finite(total.value(), "total loss", epoch, b);

    opt_.zero_grad();
    tape.backward(total);
    opt_.step();

    rec.coarse += coarse.value();
    rec.cluster += cluster_term.value();
    for (int k = 0; k < cfg_.k; ++k) {
      rec.recon[std::size_t(k)] += terms[std::size_t(k)].recon.value();
      rec.kl_z[std::size_t(k)] += terms[std::size_t(k)].kl_z.value();
      rec.kl_c[std::size_t(k)] += terms[std::size_t(k)].kl_c.value();
      rec.beta_k[std::size_t(k)] += betas[std::size_t(k)].value();
    }
    } catch (const DomainError& e) {
      // A math-domain violation mid-batch (log of a NaN activation, say) is
      // a numerical failure of the run, not a usage error.
      throw NumericError("numerical failure at epoch " +
                         std::to_string(epoch) + ", batch " +
                         std::to_string(b) + ": " + e.what());
    }
  }

  const double nb = double(batches_.size());
  rec.coarse /= nb;
  rec.cluster /= nb;
  for (int k = 0; k < cfg_.k; ++k) {
    rec.recon[std::size_t(k)] /= nb;
    rec.kl_z[std::size_t(k)] /= nb;
    rec.kl_c[std::size_t(k)] /= nb;
    rec.beta_k[std::size_t(k)] /= nb;
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  records_.push_back(rec);
  return rec;
}

std::vector<std::vector<double>> Trainer::latent_means() const {
  return compute_latent_means(cfg_, ds_, model_, aug_cache_);
}

std::optional<StopResult> Trainer::m_step(std::int64_t epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto latents = latent_means();

  const bool reinit =
      !clusters_.initialized ||
      (cfg_.reinit_every > 0 &&
       clusters_.m_steps_done % cfg_.reinit_every == 0);
  if (reinit) {
    clusters_.centers.assign(std::size_t(cfg_.k), {});
    for (int k = 0; k < cfg_.k; ++k)
      clusters_.centers[std::size_t(k)] = kmeans_init(
          latents[std::size_t(k)], ds_.n, cfg_.d_z, cfg_.t,
          derive_seed(cfg_.seed,
                      103 + std::uint64_t(k) +
                          1000 * std::uint64_t(clusters_.m_steps_done)));
    clusters_.initialized = true;
  }

  if (!clusters_.assignments.empty())
    clusters_.prev_assignments = clusters_.assignments;
  clusters_.assignments.assign(std::size_t(cfg_.k), {});
  for (int k = 0; k < cfg_.k; ++k)
    clusters_.assignments[std::size_t(k)] =
        assign(latents[std::size_t(k)], ds_.n, cfg_.d_z,
               clusters_.centers[std::size_t(k)], cfg_.t);
  ++clusters_.m_steps_done;

  std::optional<StopResult> result;
  if (!clusters_.prev_assignments.empty())
    result = stopping_criterion(clusters_.assignments,
                                clusters_.prev_assignments, cfg_.delta);

  EpochRecord rec;
  rec.epoch = epoch;
  rec.phase = 'M';
  // Quantization error over the full dataset, summed across representations.
  double q = 0;
  for (int k = 0; k < cfg_.k; ++k) {
    const auto& zs = latents[std::size_t(k)];
    const auto& cs = clusters_.centers[std::size_t(k)];
    const auto& ls = clusters_.assignments[std::size_t(k)];
    double acc = 0;
    for (std::int64_t i = 0; i < ds_.n; ++i)
      acc += dist2(zs.data() + i * cfg_.d_z,
                   cs.data() + std::int64_t(ls[std::size_t(i)]) * cfg_.d_z,
                   cfg_.d_z);
    q += acc / double(ds_.n);
  }
  rec.cluster = q;
  if (result) {
    rec.stop_value = result->value;
    rec.stopped = result->stop;
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  records_.push_back(rec);
  return result;
}

TrainedArtifacts Trainer::run() {
  bool stopped_early = false;
  std::int64_t epochs_run = 0;
  bool ended_on_m_step = false;

  for (std::int64_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    e_epoch(epoch);
    ++epochs_run;
    ended_on_m_step = false;

    const auto done = epoch + 1;
    if (cfg_.cluster_assign_enabled && done >= cfg_.warmup_epochs &&
        (done - cfg_.warmup_epochs) % cfg_.e_steps_per_m == 0) {
      const auto sr = m_step(epoch);
      ended_on_m_step = true;
      // The criterion only becomes meaningful once two assignment rounds
      // exist to compare.
      if (sr && sr->stop) {
        stopped_early = true;
        break;
      }
    }
  }

  // Leave assignments in sync with the final parameters. Skipped when the
  // loop already ended on a fresh M-step.
  if (cfg_.epochs > 0 && !ended_on_m_step) m_step(cfg_.epochs);

  TrainedArtifacts out{std::move(model_), std::move(clusters_),
                       std::move(records_), epochs_run, stopped_early};
  return out;
}

std::vector<std::vector<double>> build_aug_cache(
    const MultiClusteringDataset& ds,
    const std::vector<AugmentationPipeline>& pipelines) {
  std::vector<std::vector<double>> cache;
  cache.reserve(pipelines.size());
  for (const auto& p : pipelines)
    cache.push_back(apply_pipeline(p, ds.images, ds.n, ds.h, ds.w, ds.c));
  return cache;
}

std::vector<std::vector<double>> compute_latent_means(
    const RunConfig& cfg, const MultiClusteringDataset& ds,
    const DdmcModel& model, const std::vector<std::vector<double>>& aug_cache) {
  const auto d = ds.dim();
  std::vector<double> wvals;
  if (cfg.coarse_enabled && cfg.mixing_enabled)
    wvals = model.mixing.weights().data();

  std::vector<std::vector<double>> out(std::size_t(cfg.k));
  for (int k = 0; k < cfg.k; ++k) {
    auto& zk = out[std::size_t(k)];
    zk.resize(std::size_t(ds.n * cfg.d_z));
    for (std::int64_t start = 0; start < ds.n; start += cfg.batch_size) {
      const auto end = std::min(ds.n, start + cfg.batch_size);
      const auto bn = end - start;
      std::vector<double> rows(std::size_t(bn * d));
      if (!cfg.coarse_enabled) {
        std::copy_n(ds.images.data() + start * d, bn * d, rows.data());
      } else if (!cfg.mixing_enabled) {
        std::copy_n(aug_cache[std::size_t(k)].data() + start * d, bn * d,
                    rows.data());
      } else {
        const double w = wvals[std::size_t(k)];
        const double* clean = ds.images.data() + start * d;
        const double* aug = aug_cache[std::size_t(k)].data() + start * d;
        for (std::int64_t i = 0; i < bn * d; ++i)
          rows[std::size_t(i)] = w * clean[i] + (1.0 - w) * aug[i];
      }
      const Tensor xb = Tensor::from({bn, d}, std::move(rows));
      const GaussianPosterior post = encode(model.encoder, xb, cfg.sigma0);
      std::copy_n(post.mu.data().data(), bn * cfg.d_z,
                  zk.data() + start * cfg.d_z);
    }
  }
  return out;
}

}  // namespace ddmc
