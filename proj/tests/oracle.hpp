#ifndef RNNHA_TESTS_ORACLE_HPP_
#define RNNHA_TESTS_ORACLE_HPP_

// Brute-force retrieval metrics, written without any library code. Ranks
// come from pairwise comparison counts rather than sorting: the rank of a
// gallery unit is one plus the number of units that beat it, where a unit
// beats another if its similarity is higher, or equal with a lower index.
// Similarities are compared after rounding to multiples of 2^-32, so values
// that differ only by round-off count as equal.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

struct Item {
  std::vector<double> feature;
  std::string vehicle;
  std::string camera;
  std::string track;
};

struct Metrics {
  double map = 0.0;
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

inline std::vector<double> unit(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  std::vector<double> out = v;
  if (sq == 0.0) return out;
  const double n = std::sqrt(sq);
  for (double& x : out) x /= n;
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Gallery units are tracks (first-appearance order). With per_image_tracks
/// every gallery image is its own unit. Units sharing the query's camera are
/// dropped when exclude_same_camera is set.
inline Metrics evaluate(const std::vector<Item>& queries, const std::vector<Item>& gallery,
                        bool exclude_same_camera, bool per_image_tracks) {
  struct Unit {
    std::string track, vehicle, camera;
    std::vector<std::vector<double>> features;
  };
  std::vector<Unit> units;
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    const Item& it = gallery[g];
    std::size_t u = units.size();
    if (!per_image_tracks) {
      for (std::size_t k = 0; k < units.size(); ++k) {
        if (units[k].track == it.track) u = k;
      }
    }
    if (u == units.size()) units.push_back(Unit{it.track, it.vehicle, it.camera, {}});
    units[u].features.push_back(unit(it.feature));
  }

  Metrics m;
  double ap_total = 0.0;
  std::size_t within1 = 0, within5 = 0;
  for (const Item& q : queries) {
    const std::vector<double> qf = unit(q.feature);
    std::vector<double> sims;
    std::vector<bool> relevant;
    for (const Unit& u : units) {
      if (exclude_same_camera && u.camera == q.camera) continue;
      double best = -INFINITY;
      for (const auto& f : u.features) best = std::fmax(best, dot(qf, f));
      sims.push_back(std::round(best * 4294967296.0) / 4294967296.0);
      relevant.push_back(u.vehicle == q.vehicle);
    }
    std::vector<std::size_t> rank(sims.size());
    for (std::size_t a = 0; a < sims.size(); ++a) {
      std::size_t beaten_by = 0;
      for (std::size_t b = 0; b < sims.size(); ++b) {
        if (sims[b] > sims[a] || (sims[b] == sims[a] && b < a)) ++beaten_by;
      }
      rank[a] = beaten_by + 1;
    }
    // Walk ranks 1..n in order so the precision sum matches rank order.
    std::size_t hits = 0;
    double total = 0.0;
    std::optional<std::size_t> first;
    for (std::size_t r = 1; r <= sims.size(); ++r) {
      for (std::size_t a = 0; a < sims.size(); ++a) {
        if (rank[a] != r || !relevant[a]) continue;
        ++hits;
        total += static_cast<double>(hits) / static_cast<double>(r);
        if (!first) first = r;
      }
    }
    if (hits == 0) {
      ++m.skipped;
      continue;
    }
    ap_total += total / static_cast<double>(hits);
    ++m.evaluated;
    if (*first <= 1) ++within1;
    if (*first <= 5) ++within5;
  }
  if (m.evaluated > 0) {
    m.map = ap_total / static_cast<double>(m.evaluated);
    m.cmc1 = static_cast<double>(within1) / static_cast<double>(m.evaluated);
    m.cmc5 = static_cast<double>(within5) / static_cast<double>(m.evaluated);
  }
  return m;
}

}  // namespace oracle

#endif  // RNNHA_TESTS_ORACLE_HPP_
