#ifndef RNNHA_RETRIEVAL_HPP_
#define RNNHA_RETRIEVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rnnha/model.hpp"

namespace rnnha {

struct ItemMeta {
  std::string vehicle_id;
  std::optional<std::string> camera_id;
  std::optional<std::string> track_id;
};

/// l2-normalized features with per-item identity metadata.
struct RetrievalIndex {
  std::vector<FeatureVector> features;
  std::vector<ItemMeta> meta;

  static RetrievalIndex build(const std::vector<std::vector<double>>& raw,
                              std::vector<ItemMeta> meta);
  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features.front().values.size(); }
  RetrievalIndex subset(const std::vector<std::size_t>& rows) const;
};

/// u·v / (|u||v|); 0 when either vector is zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Similarity rounded to a 2^-32 grid. Ranking compares keys, so values that
/// differ only by floating round-off (for example after rescaling every
/// feature) still tie.
double similarity_key(double similarity);

/// Gallery order by descending similarity key; ties go to the lower index.
std::vector<std::size_t> rank_by_similarity(const std::vector<double>& similarities);

/// (1/R) Σ precision@k over relevant positions; nullopt when R = 0.
std::optional<double> average_precision(const std::vector<bool>& ranked_relevance);

/// Fraction of queries whose first hit (1-based rank) is within k.
double cmc_at_k(const std::vector<std::size_t>& first_hit_ranks, std::size_t k);

enum class TrackAggregation { max, mean };
TrackAggregation parse_aggregation(const std::string& text);

struct RepeatResult {
  std::uint64_t seed = 0;
  double map = 0.0;
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> gallery;  // item indices chosen for this repeat
};

struct EvaluationReport {
  std::string protocol;
  double map = 0.0;
  std::map<int, double> cmc;  // k -> accuracy, k in {1, 5}
  std::vector<RepeatResult> repeats;
  std::uint64_t seed = 0;
  std::size_t queries = 0;
  std::size_t gallery = 0;
  std::size_t skipped = 0;
  std::size_t gallery_size = 0;
  std::string aggregation;

  /// {protocol, map, cmc:{"1","5"}, repeats:[...], seed, counts:{...}}
  std::string to_json() const;
};

/// Per-query outcome used by both protocols.
struct QueryScore {
  std::optional<double> ap;
  std::optional<std::size_t> first_hit;
};

/// Scores one query given gallery similarities and relevance flags.
QueryScore score_query(const std::vector<double>& similarities, const std::vector<bool>& relevant);

/**
 * Image-to-track retrieval: gallery units are tracks, a track's similarity is
 * the max (or mean) over its images, and tracks from the query's camera are
 * not ranked. Queries without any relevant cross-camera track are skipped.
 */
EvaluationReport veri_protocol(const RetrievalIndex& queries, const RetrievalIndex& gallery,
                               TrackAggregation aggregation = TrackAggregation::max);

struct GallerySelection {
  std::vector<std::size_t> gallery;
  std::vector<std::size_t> queries;
};

/// Draws `gallery_size` vehicles and one gallery image for each; the other
/// images of those vehicles become queries.
GallerySelection vehicleid_selection(const RetrievalIndex& test, std::size_t gallery_size,
                                     std::uint64_t seed);

EvaluationReport vehicleid_protocol(const RetrievalIndex& test, std::size_t gallery_size,
                                    std::size_t repeats, std::uint64_t seed);

}  // namespace rnnha

#endif  // RNNHA_RETRIEVAL_HPP_
