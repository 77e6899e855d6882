#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddmc/tensor.hpp"

namespace ddmc {

enum class AugKind {
  Rotate90,
  HorizontalFlip,
  CropResize,
  ChannelJitter,
  PixelNoise,
};

// One image transform. All parameters are fixed when the op is sampled;
// the random draws inside ChannelJitter and PixelNoise are re-derived per
// image from the owning pipeline's seed, so re-applying a pipeline to the
// same image always reproduces the same pixels.
struct AugmentationOp {
  AugKind kind = AugKind::HorizontalFlip;
  int quarter_turns = 1;         // Rotate90: 1..3 clockwise quarter turns
  double crop_fraction = 0.8;    // CropResize: window side scale, (0,1]
  double crop_anchor_y = 0.5;    // CropResize: window placement, 0=top 1=bottom
  double crop_anchor_x = 0.5;    // CropResize: window placement, 0=left 1=right
  double jitter_strength = 0.5;  // ChannelJitter: scale in [1-s/2,1+s/2], offset in [-0.2s,0.2s]
  double noise_sigma = 0.05;     // PixelNoise: uniform half-width

  std::string describe() const;
  bool operator==(const AugmentationOp&) const = default;
};

struct AugmentationPipeline {
  std::vector<AugmentationOp> ops;  // applied in order, length 1..3
  std::uint64_t seed = 0;           // base for all per-image randomness

  std::string describe() const;
};

// The finite menu of single ops, in a fixed enumeration order.
std::vector<AugmentationOp> augmentation_op_space();

// Number of distinct op sequences of length 1..3.
std::int64_t pipeline_capacity();

// Draws k pipelines with pairwise-distinct op sequences, deterministic in
// seed. k beyond the sequence space is a ConfigError.
std::vector<AugmentationPipeline> sample_pipelines(int k, std::uint64_t seed);

// Runs the pipeline over a batch of flattened images (n rows of h*w*c
// values, channel fastest). Pure value transform, never recorded on the
// tape. Outputs stay in [0,1].
std::vector<double> apply_pipeline(const AugmentationPipeline& p,
                                   const std::vector<double>& images,
                                   std::int64_t n, std::int64_t h,
                                   std::int64_t w, std::int64_t c);

// Per-representation blend weights between the clean batch and its
// augmented copy, stored as unconstrained logits so gradient steps keep
// every weight strictly inside (0,1).
struct MixingWeights {
  Tensor raw;  // {1, k} trainable parameter

  explicit MixingWeights(int k, double initial_weight = 0.5);
  int k() const { return int(raw.shape()[1]); }
  Tensor weights() const;  // logistic(raw), {1, k}
};

// w_k * clean + (1 - w_k) * augmented with w_k a {1,1} tensor, typically a
// column slice of MixingWeights::weights(). Recorded on the tape, so loss
// gradients reach the mixing logits.
Tensor mix(const Tensor& clean, const Tensor& augmented, const Tensor& w_k);
Tensor mix(const Tensor& clean, const Tensor& augmented, const MixingWeights& w, int k);

// Linear-kernel dependence between two batches with matching row counts:
// (n-1)^2 * tr(Ga H Gb H) where G = X X^T and H centers across rows. Zero
// exactly when the centered cross-covariance vanishes; differentiable in
// both inputs.
Tensor hsic(const Tensor& xa, const Tensor& xb);

// Sum of hsic over ordered pairs of distinct batches; the scalar 0 when
// only one batch is given. Minimizing it pushes the mixed batches toward
// pairwise statistical independence.
Tensor coarse_loss(const std::vector<Tensor>& mixed);

}  // namespace ddmc
