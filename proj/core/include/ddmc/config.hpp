#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddmc/losses.hpp"

namespace ddmc {

// Every knob of a training run. Flat on purpose: runs are described by a
// small key=value file plus command-line overrides, and the canonical
// serialization below is hashed into checkpoints and manifests.
struct RunConfig {
  // Model.
  int k = 2;  // representations
  int t = 3;  // clusters per representation
  int m = 2;  // aspects (expected clusterings)
  std::int64_t d_z = 16;
  std::vector<std::int64_t> hidden = {256, 128};
  double tau = 0.9;
  double sigma0 = 0.2;
  // Capacity penalty weight. Kept small so reconstruction can shape the
  // latents before the warm-up k-means freezes the cluster centers; large
  // values pin the KL to the (still tiny) early capacity and the frozen
  // centers then entrench an arbitrary partition.
  double beta = 0.5;

  // Optimization.
  double lr = 0.001;
  double weight_decay = 0.0001;
  std::int64_t epochs = 1000;
  double delta = 0.0005;  // stopping threshold on the changed-label fraction
  std::int64_t batch_size = 128;
  std::int64_t e_steps_per_m = 5;
  std::int64_t warmup_epochs = 20;  // epochs before the first cluster init
  std::int64_t reinit_every = 0;    // re-run k-means every this many M-steps; 0 = once

  // Capacity schedules: both ramp from 0 over the first
  // capacity_ramp_frac of the epoch budget.
  double u_z_max = 25.0;
  double u_c_max = -1.0;  // negative means log(m)
  double capacity_ramp_frac = 0.5;

  // Data: either a generator kind or an explicit container path.
  std::string dataset = "stickfig";  // "stickfig" or "colored_shapes"
  std::string data;                  // when set, load this MCDS file instead
  int t1 = 0;                        // generator factor sizes; 0 means use t
  int t2 = 0;
  std::int64_t per_combo = 100;
  double noise = 0.02;

  // Seeding. seed drives everything except augmentation pipeline choice,
  // which has its own stream so reseeded runs keep the same pipelines.
  // The default pipeline draw pairs a top-region crop with a bottom-region
  // crop, which separates the bundled generators' two factors cleanly.
  std::uint64_t seed = 1;
  std::uint64_t aug_seed = 19;

  // Ablation switches.
  bool coarse_enabled = true;          // off: no mixing, no pairwise dependence term
  bool cluster_assign_enabled = true;  // off: no cluster term, single final k-means
  bool mixing_enabled = true;          // off: representations see only augmented pixels
  bool fixed_mix_w = false;            // freeze mixing weights at 0.5
  bool resample_aug = false;           // redraw augmentation noise each epoch
};

// Parses a key=value file ('#' comments, blank lines allowed). Unknown keys
// and malformed values raise ConfigError; an unreadable path raises IoError.
RunConfig load_config(const std::string& path);

// Applies one key=value pair; shared by the file parser and CLI overrides.
void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Canonical serialization: every key, alphabetical, one per line. Stable
// across runs, round-trips through the parser.
std::string serialize_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);  // throws ConfigError

double resolved_u_c_max(const RunConfig& cfg);
CapacitySchedule z_capacity(const RunConfig& cfg);
CapacitySchedule c_capacity(const RunConfig& cfg);

}  // namespace ddmc
