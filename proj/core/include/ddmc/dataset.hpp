#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddmc {

// Images with one ground-truth labeling per annotated factor. Pixels are
// flattened H*W*C row-major per image, values in [0,1] and exactly
// representable in float so container round-trips are lossless.
struct MultiClusteringDataset {
  std::int64_t n = 0, h = 0, w = 0, c = 0;
  std::vector<double> images;                 // n * h*w*c
  std::vector<std::string> clustering_names;  // size M
  std::vector<int> cluster_counts;            // size M, entries T_m
  std::vector<std::vector<int>> labelings;    // M x n

  std::int64_t dim() const { return h * w * c; }
  const double* image(std::int64_t i) const { return images.data() + i * dim(); }
};

struct GeneratorSpec {
  int t1 = 3;          // first factor's class count
  int t2 = 3;          // second factor's class count
  int per_combo = 100; // samples per (t1, t2) cell
  double noise = 0.02; // half-width of uniform additive pixel noise, <= 0.2
  std::uint64_t seed = 1;
};

// 20x20 grayscale stick figures; factor 1 picks the arm pose, factor 2 the
// leg pose (up/level/down x together/apart/bent). Labelings are named
// "upper" and "lower".
MultiClusteringDataset generate_stickfig(const GeneratorSpec& spec);

// 16x16 RGB filled shapes; factor 1 picks the mask (circle/square/triangle/
// cross), factor 2 the fill color (yellow/red/green/blue). Labelings are
// named "shape" and "color".
MultiClusteringDataset generate_colored_shapes(const GeneratorSpec& spec);

void save_dataset(const MultiClusteringDataset& ds, const std::string& path);
MultiClusteringDataset load_dataset(const std::string& path);

struct RunConfig;

// Resolves a run's data source: an explicit container path wins, otherwise
// the named generator runs with t1/t2 (0 falls back to t), per_combo, noise
// and the run seed.
MultiClusteringDataset dataset_from_config(const RunConfig& cfg);

}  // namespace ddmc
