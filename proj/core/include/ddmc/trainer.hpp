#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ddmc/augment.hpp"
#include "ddmc/config.hpp"
#include "ddmc/dataset.hpp"
#include "ddmc/model.hpp"
#include "ddmc/rng.hpp"
#include "ddmc/tensor.hpp"

namespace ddmc {

// Adam with decoupled-from-nothing weight decay: the decay term is added to
// the gradient before the moment updates, matching the common framework
// default.
struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0001;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void zero_grad();
  void step();  // reads each parameter's grad, updates values in place
  std::int64_t step_count() const { return t_; }
  const std::vector<double>& first_moment(std::size_t param_index) const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// Fixed cluster centers and hard assignments, one set per representation.
// Centers are t rows of d_z values. Assignments are compact labels; rows of
// the implied one-hot matrix therefore always have exactly one 1.
struct ClusterState {
  std::int64_t t = 0;
  std::int64_t d_z = 0;
  bool initialized = false;
  int m_steps_done = 0;
  std::vector<std::vector<double>> centers;       // per k: t * d_z
  std::vector<std::vector<int>> assignments;      // per k: n labels
  std::vector<std::vector<int>> prev_assignments; // per k, empty before 2nd M-step
};

// k-means++ seeding plus Lloyd iterations (at most 100), deterministic in
// seed. Empty clusters are repaired by re-seeding the farthest point.
// Returns t rows of d centers. n < t is a ConfigError.
std::vector<double> kmeans_init(const std::vector<double>& z, std::int64_t n,
                                std::int64_t d, int t, std::uint64_t seed);

// Nearest-center hard assignment; ties go to the lowest center index.
std::vector<int> assign(const std::vector<double>& z, std::int64_t n,
                        std::int64_t d, const std::vector<double>& centers,
                        int t);

// Mean squared distance from each latent row to its assigned center,
// recorded on the tape so the gradient reaches z (centers and labels are
// constants).
Tensor cluster_loss(const Tensor& z, const std::vector<double>& centers,
                    const std::vector<int>& labels, int t);

struct StopResult {
  double value = 1.0;  // fraction of labels that changed since last M-step
  bool stop = false;   // value strictly below delta
};

// Aggregates all representations: value = changed / total over every
// (representation, sample) pair, counted in integers so threshold
// comparisons are exact.
StopResult stopping_criterion(const std::vector<std::vector<int>>& curr,
                              const std::vector<std::vector<int>>& prev,
                              double delta);

// One row of the training log.
struct EpochRecord {
  std::int64_t epoch = 0;
  char phase = 'E';           // 'E' gradient epoch, 'M' assignment step
  double coarse = 0.0;
  std::vector<double> recon;  // per representation, batch-averaged
  std::vector<double> kl_z;
  std::vector<double> kl_c;
  std::vector<double> beta_k;
  double cluster = 0.0;
  double u_z = 0.0;
  double u_c = 0.0;
  double stop_value = -1.0;   // -1 until the second M-step
  bool stopped = false;
  double wall_ms = 0.0;
};

struct TrainedArtifacts {
  DdmcModel model;
  ClusterState clusters;
  std::vector<EpochRecord> log;
  std::int64_t epochs_run = 0;
  bool stopped_early = false;
};

// Variational EM driver: gradient epochs optimize the disentanglement
// parameters with cluster centers and assignments frozen; M-steps refresh
// assignments from noise-free latents with centers fixed after their
// single k-means initialization.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const MultiClusteringDataset& ds);

  TrainedArtifacts run();

  // Exposed stepwise for tests; run() is built from these.
  EpochRecord e_epoch(std::int64_t epoch);
  std::optional<StopResult> m_step(std::int64_t epoch);

  DdmcModel& model() { return model_; }
  ClusterState& clusters() { return clusters_; }
  const std::vector<EpochRecord>& log() const { return records_; }
  const std::vector<AugmentationPipeline>& pipelines() const { return pipelines_; }

  // Noise-free latent means for the whole dataset, one n x d_z block per
  // representation; the M-step and evaluation both read these.
  std::vector<std::vector<double>> latent_means() const;

 private:
  void rebuild_aug_cache(std::uint64_t epoch_salt);

  RunConfig cfg_;
  const MultiClusteringDataset& ds_;
  DdmcModel model_;
  ClusterState clusters_;
  Adam opt_;
  Rng rng_;  // consumes gaussian and gumbel draws in epoch order
  std::vector<std::vector<std::int64_t>> batches_;
  std::vector<AugmentationPipeline> pipelines_;
  std::vector<std::vector<double>> aug_cache_;  // per k: n * d
  std::vector<EpochRecord> records_;
};

// Applies each pipeline to the full dataset; one n x d block per pipeline.
std::vector<std::vector<double>> build_aug_cache(
    const MultiClusteringDataset& ds,
    const std::vector<AugmentationPipeline>& pipelines);

// Same latents the trainer's M-step sees, computable from saved parameters:
// mixes per configuration, encodes, returns the posterior means.
std::vector<std::vector<double>> compute_latent_means(
    const RunConfig& cfg, const MultiClusteringDataset& ds,
    const DdmcModel& model, const std::vector<std::vector<double>>& aug_cache);

}  // namespace ddmc
