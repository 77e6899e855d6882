#include "ddmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>

#include "ddmc/errors.hpp"

namespace ddmc {

namespace {

void check_labels(const Partition& p, const char* who) {
  if (p.labels.empty())
    throw DimensionError(std::string(who) + ": empty partition");
  if (p.t <= 0)
    throw DimensionError(std::string(who) + ": non-positive cluster count");
  for (int v : p.labels)
    if (v < 0 || v >= p.t)
      throw DimensionError(std::string(who) + ": label " + std::to_string(v) +
                           " outside [0," + std::to_string(p.t) + ")");
}

void check_pair(const Partition& a, const Partition& b, const char* who) {
  check_labels(a, who);
  check_labels(b, who);
  if (a.labels.size() != b.labels.size())
    throw DimensionError(std::string(who) + ": partition sizes differ: " +
                         std::to_string(a.labels.size()) + " vs " +
                         std::to_string(b.labels.size()));
}

// counts[i*tb + j], row sums, column sums
struct Contingency {
  std::vector<std::uint64_t> counts, rows, cols;
  std::uint64_t n;
};

Contingency contingency(const Partition& a, const Partition& b) {
  Contingency c;
  c.n = a.labels.size();
  c.counts.assign(std::size_t(a.t) * std::size_t(b.t), 0);
  c.rows.assign(std::size_t(a.t), 0);
  c.cols.assign(std::size_t(b.t), 0);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    c.counts[std::size_t(a.labels[i]) * std::size_t(b.t) +
             std::size_t(b.labels[i])]++;
    c.rows[std::size_t(a.labels[i])]++;
    c.cols[std::size_t(b.labels[i])]++;
  }
  return c;
}

double entropy(const std::vector<std::uint64_t>& counts, std::uint64_t n) {
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    double p = double(c) / double(n);
    h -= p * std::log(p);
  }
  return h;
}

std::uint64_t choose2(std::uint64_t n) { return n * (n - 1) / 2; }

}  // namespace

Partition Partition::of(std::vector<int> labels) {
  int mx = -1;
  for (int v : labels) mx = std::max(mx, v);
  return of(std::move(labels), mx + 1);
}

Partition Partition::of(std::vector<int> labels, int t) {
  Partition p;
  p.labels = std::move(labels);
  p.t = t;
  check_labels(p, "Partition");
  return p;
}

double nmi(const Partition& a, const Partition& b) {
  check_pair(a, b, "nmi");
  Contingency c = contingency(a, b);
  double ha = entropy(c.rows, c.n);
  double hb = entropy(c.cols, c.n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;

  double mi = 0.0;
  const double n = double(c.n);
  for (int i = 0; i < a.t; ++i) {
    for (int j = 0; j < b.t; ++j) {
      std::uint64_t nij = c.counts[std::size_t(i) * std::size_t(b.t) +
                                   std::size_t(j)];
      if (nij == 0) continue;
      double pij = double(nij) / n;
      mi += pij * std::log(n * double(nij) /
                           (double(c.rows[std::size_t(i)]) *
                            double(c.cols[std::size_t(j)])));
    }
  }
  double v = mi / std::sqrt(ha * hb);
  return std::min(1.0, std::max(0.0, v));
}

double rand_index(const Partition& a, const Partition& b) {
  check_pair(a, b, "rand_index");
  if (a.labels.size() < 2)
    throw DimensionError("rand_index: needs at least 2 items");
  Contingency c = contingency(a, b);

  std::uint64_t sum_ij = 0, sum_a = 0, sum_b = 0;
  for (std::uint64_t v : c.counts) sum_ij += choose2(v);
  for (std::uint64_t v : c.rows) sum_a += choose2(v);
  for (std::uint64_t v : c.cols) sum_b += choose2(v);
  const std::uint64_t total = choose2(c.n);
  // same-same pairs + different-different pairs
  const std::uint64_t agree = sum_ij + (total + sum_ij - sum_a - sum_b);
  return double(agree) / double(total);
}

MatchReport match_report(const std::vector<Partition>& predicted,
                         const std::vector<Partition>& reference) {
  if (predicted.empty() || reference.empty())
    throw DimensionError("match_report: empty partition list");
  MatchReport rep;
  rep.grid.resize(predicted.size());
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    rep.grid[k].resize(reference.size());
    for (std::size_t m = 0; m < reference.size(); ++m) {
      rep.grid[k][m].nmi = nmi(predicted[k], reference[m]);
      rep.grid[k][m].ri = rand_index(predicted[k], reference[m]);
    }
  }
  rep.best_representation.assign(reference.size(), 0);
  for (std::size_t m = 0; m < reference.size(); ++m) {
    int best = 0;
    for (std::size_t k = 1; k < predicted.size(); ++k)
      if (rep.grid[k][m].nmi > rep.grid[std::size_t(best)][m].nmi)
        best = int(k);
    rep.best_representation[m] = best;
  }
  return rep;
}

std::string metrics_csv(const MatchReport& report,
                        const std::vector<std::string>& reference_names) {
  if (reference_names.size() != report.best_representation.size())
    throw DimensionError("metrics_csv: name count does not match report");
  std::string out = "clustering,representation,nmi,ri\n";
  char buf[128];
  auto row = [&](const std::string& name, int k, const MatchCell& c) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.12f,%.12f\n", name.c_str(), k,
                  c.nmi, c.ri);
    out += buf;
  };
  for (std::size_t m = 0; m < reference_names.size(); ++m)
    for (std::size_t k = 0; k < report.grid.size(); ++k)
      row(reference_names[m], int(k), report.grid[k][m]);
  for (std::size_t m = 0; m < reference_names.size(); ++m) {
    int k = report.best_representation[m];
    row(reference_names[m], k, report.grid[std::size_t(k)][m]);
  }
  return out;
}

}  // namespace ddmc
