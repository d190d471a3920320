#include "rnnha/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "rnnha/errors.hpp"
#include "rnnha/rng.hpp"

namespace rnnha {

RetrievalIndex RetrievalIndex::build(const std::vector<std::vector<double>>& raw,
                                     std::vector<ItemMeta> meta) {
  if (raw.size() != meta.size()) {
    throw ValidationError("retrieval index has " + std::to_string(raw.size()) + " features but " +
                          std::to_string(meta.size()) + " metadata rows");
  }
  RetrievalIndex index;
  for (const auto& f : raw) {
    if (!raw.empty() && f.size() != raw.front().size()) {
      throw ShapeError("retrieval features have unequal dimensions");
    }
    index.features.push_back(l2_normalize(f));
  }
  index.meta = std::move(meta);
  return index;
}

RetrievalIndex RetrievalIndex::subset(const std::vector<std::size_t>& rows) const {
  RetrievalIndex out;
  for (std::size_t r : rows) {
    out.features.push_back(features.at(r));
    out.meta.push_back(meta.at(r));
  }
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine similarity of " + std::to_string(u.size()) + "-dim and " +
                     std::to_string(v.size()) + "-dim vectors");
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

namespace {

// Features in an index are already unit length, so cosine is the dot product.
double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

}  // namespace

double similarity_key(double similarity) {
  return std::ldexp(std::round(std::ldexp(similarity, 32)), -32);
}

std::vector<std::size_t> rank_by_similarity(const std::vector<double>& similarities) {
  std::vector<double> keys(similarities.size());
  std::transform(similarities.begin(), similarities.end(), keys.begin(), similarity_key);
  std::vector<std::size_t> order(similarities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  return order;
}

std::optional<double> average_precision(const std::vector<bool>& ranked_relevance) {
  std::size_t hits = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k]) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return total / static_cast<double>(hits);
}

double cmc_at_k(const std::vector<std::size_t>& first_hit_ranks, std::size_t k) {
  if (first_hit_ranks.empty()) return 0.0;
  const auto within = std::count_if(first_hit_ranks.begin(), first_hit_ranks.end(),
                                    [k](std::size_t r) { return r <= k; });
  return static_cast<double>(within) / static_cast<double>(first_hit_ranks.size());
}

TrackAggregation parse_aggregation(const std::string& text) {
  if (text == "max") return TrackAggregation::max;
  if (text == "mean") return TrackAggregation::mean;
  throw ConfigError("unknown track aggregation '" + text + "' (expected max or mean)");
}

QueryScore score_query(const std::vector<double>& similarities, const std::vector<bool>& relevant) {
  const std::vector<std::size_t> order = rank_by_similarity(similarities);
  std::vector<bool> ranked(order.size());
  QueryScore score;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ranked[k] = relevant[order[k]];
    if (ranked[k] && !score.first_hit) score.first_hit = k + 1;
  }
  score.ap = average_precision(ranked);
  return score;
}

namespace {

struct Summary {
  double map = 0.0;
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

Summary summarize(const std::vector<QueryScore>& scores) {
  Summary s;
  std::vector<std::size_t> ranks;
  double ap_total = 0.0;
  for (const QueryScore& q : scores) {
    if (!q.ap) {
      ++s.skipped;
      continue;
    }
    ap_total += *q.ap;
    ranks.push_back(*q.first_hit);
  }
  s.evaluated = ranks.size();
  if (s.evaluated > 0) s.map = ap_total / static_cast<double>(s.evaluated);
  s.cmc1 = cmc_at_k(ranks, 1);
  s.cmc5 = cmc_at_k(ranks, 5);
  return s;
}

}  // namespace

EvaluationReport veri_protocol(const RetrievalIndex& queries, const RetrievalIndex& gallery,
                               TrackAggregation aggregation) {
  auto require_meta = [](const RetrievalIndex& idx, const char* what) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!idx.meta[i].camera_id || !idx.meta[i].track_id) {
        throw ValidationError(std::string("image-to-track protocol needs camera_id and track_id; ") +
                              what + " item " + std::to_string(i) + " lacks them");
      }
    }
  };
  require_meta(queries, "query");
  require_meta(gallery, "gallery");
  if (queries.size() && gallery.size() && queries.dim() != gallery.dim()) {
    throw ShapeError("query and gallery features differ in dimension");
  }

  struct Track {
    std::string vehicle;
    std::string camera;
    std::vector<std::size_t> items;
  };
  std::vector<Track> tracks;
  std::map<std::string, std::size_t> track_of;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const ItemMeta& m = gallery.meta[i];
    auto [it, inserted] = track_of.emplace(*m.track_id, tracks.size());
    if (inserted) tracks.push_back(Track{m.vehicle_id, *m.camera_id, {}});
    Track& t = tracks[it->second];
    if (t.vehicle != m.vehicle_id || t.camera != *m.camera_id) {
      throw ValidationError("track '" + *m.track_id + "' mixes vehicles or cameras");
    }
    t.items.push_back(i);
  }

  std::vector<QueryScore> scores;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const ItemMeta& qm = queries.meta[q];
    std::vector<double> sims;
    std::vector<bool> relevant;
    for (const Track& t : tracks) {
      if (t.camera == *qm.camera_id) continue;
      double agg = aggregation == TrackAggregation::max ? -std::numeric_limits<double>::infinity()
                                                         : 0.0;
      for (std::size_t g : t.items) {
        const double s = dot(queries.features[q], gallery.features[g]);
        agg = aggregation == TrackAggregation::max ? std::max(agg, s) : agg + s;
      }
      if (aggregation == TrackAggregation::mean) agg /= static_cast<double>(t.items.size());
      sims.push_back(agg);
      relevant.push_back(t.vehicle == qm.vehicle_id);
    }
    scores.push_back(score_query(sims, relevant));
  }
  const Summary s = summarize(scores);
  EvaluationReport report;
  report.protocol = "veri";
  report.map = s.map;
  report.cmc = {{1, s.cmc1}, {5, s.cmc5}};
  report.queries = s.evaluated;
  report.skipped = s.skipped;
  report.gallery = tracks.size();
  report.aggregation = aggregation == TrackAggregation::max ? "max" : "mean";
  return report;
}

GallerySelection vehicleid_selection(const RetrievalIndex& test, std::size_t gallery_size,
                                     std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_vehicle;
  for (std::size_t i = 0; i < test.size(); ++i) by_vehicle[test.meta[i].vehicle_id].push_back(i);
  if (gallery_size == 0 || by_vehicle.size() < gallery_size) {
    throw ConfigError("test set has " + std::to_string(by_vehicle.size()) +
                      " vehicles, cannot draw a gallery of " + std::to_string(gallery_size) +
                      "; try --gallery-size " + std::to_string(by_vehicle.size()) +
                      " or smaller");
  }
  std::vector<const std::vector<std::size_t>*> vehicles;
  for (const auto& [id, items] : by_vehicle) vehicles.push_back(&items);
  Rng rng(seed);
  // Partial Fisher-Yates: the first gallery_size slots are the drawn vehicles.
  for (std::size_t i = 0; i < gallery_size; ++i) {
    std::swap(vehicles[i], vehicles[i + rng.below(vehicles.size() - i)]);
  }
  GallerySelection sel;
  for (std::size_t v = 0; v < gallery_size; ++v) {
    const std::vector<std::size_t>& items = *vehicles[v];
    const std::size_t pick = rng.below(items.size());
    sel.gallery.push_back(items[pick]);
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k != pick) sel.queries.push_back(items[k]);
    }
  }
  std::sort(sel.gallery.begin(), sel.gallery.end());
  std::sort(sel.queries.begin(), sel.queries.end());
  return sel;
}

EvaluationReport vehicleid_protocol(const RetrievalIndex& test, std::size_t gallery_size,
                                    std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw ConfigError("repeats must be at least 1");
  EvaluationReport report;
  report.protocol = "vehicleid";
  report.seed = seed;
  report.gallery_size = gallery_size;
  double map = 0.0, cmc1 = 0.0, cmc5 = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const std::uint64_t repeat_seed = derive_seed(seed, r);
    GallerySelection sel = vehicleid_selection(test, gallery_size, repeat_seed);
    std::vector<QueryScore> scores;
    scores.reserve(sel.queries.size());
    for (std::size_t q : sel.queries) {
      std::vector<double> sims;
      std::vector<bool> relevant;
      for (std::size_t g : sel.gallery) {
        sims.push_back(dot(test.features[q], test.features[g]));
        relevant.push_back(test.meta[g].vehicle_id == test.meta[q].vehicle_id);
      }
      scores.push_back(score_query(sims, relevant));
    }
    const Summary s = summarize(scores);
    report.repeats.push_back(
        RepeatResult{repeat_seed, s.map, s.cmc1, s.cmc5, s.evaluated, s.skipped, sel.gallery});
    map += s.map;
    cmc1 += s.cmc1;
    cmc5 += s.cmc5;
    report.queries += s.evaluated;
    report.skipped += s.skipped;
  }
  const double n = static_cast<double>(repeats);
  report.map = map / n;
  report.cmc = {{1, cmc1 / n}, {5, cmc5 / n}};
  report.gallery = gallery_size;
  return report;
}

std::string EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = protocol;
  j["map"] = map;
  nlohmann::ordered_json c;
  for (const auto& [k, v] : cmc) c[std::to_string(k)] = v;
  j["cmc"] = c;
  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (const RepeatResult& r : repeats) {
    reps.push_back({{"seed", r.seed},
                    {"map", r.map},
                    {"cmc", {{"1", r.cmc1}, {"5", r.cmc5}}},
                    {"queries", r.queries},
                    {"skipped", r.skipped},
                    {"gallery", r.gallery}});
  }
  j["repeats"] = reps;
  j["seed"] = seed;
  j["counts"] = {{"queries", queries},
                 {"gallery", gallery},
                 {"skipped_queries", skipped},
                 {"gallery_size", gallery_size}};
  if (!aggregation.empty()) j["aggregation"] = aggregation;
  return j.dump(2) + "\n";
}

}  // namespace rnnha
