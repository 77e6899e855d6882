#pragma once

#include <string>
#include <vector>

namespace ddmc {

// Hard assignment of n items to clusters 0..t-1.
struct Partition {
  std::vector<int> labels;
  int t = 0;  // cluster count; every label lies in [0, t)

  static Partition of(std::vector<int> labels);  // t = max label + 1
  static Partition of(std::vector<int> labels, int t);
  std::size_t size() const { return labels.size(); }
};

// Normalized mutual information with natural logs and geometric-mean
// normalization. Zero-entropy conventions: 1 if both partitions are
// constant, 0 if exactly one is.
double nmi(const Partition& a, const Partition& b);

// Fraction of item pairs on which the partitions agree. Needs n >= 2.
double rand_index(const Partition& a, const Partition& b);

struct MatchCell {
  double nmi;
  double ri;
};

// Scores of K predicted partitions against M reference labelings, plus the
// best representation per reference (argmax NMI, ties to the lowest index).
struct MatchReport {
  std::vector<std::vector<MatchCell>> grid;  // indexed [k][m]
  std::vector<int> best_representation;      // size M
};

MatchReport match_report(const std::vector<Partition>& predicted,
                         const std::vector<Partition>& reference);

// CSV with header clustering,representation,nmi,ri: one row per (reference,
// representation) pair, then one summary row per reference whose
// representation column carries the argmax index.
std::string metrics_csv(const MatchReport& report,
                        const std::vector<std::string>& reference_names);

}  // namespace ddmc
