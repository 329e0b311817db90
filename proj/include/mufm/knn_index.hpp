#ifndef MUFM_KNN_INDEX_HPP
#define MUFM_KNN_INDEX_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mufm/embedding.hpp"
#include "mufm/error.hpp"

namespace mufm {

enum class Metric {
  CosineDistance,  // 1 - cosine similarity
  Euclidean,
};

struct Neighbor {
  std::string source_id;
  std::string subject;
  double distance = 0.0;  // under the index metric
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact K-NN over a labeled gallery of unit embeddings.
///
/// Immutable once built; queries are const and safe to run concurrently.
/// Neighbors are ordered by ascending distance, ties by ascending source_id.
class GalleryIndex {
 public:
  GalleryIndex() = default;

  static GalleryIndex build(std::vector<Embedding> entries, Metric metric = Metric::CosineDistance) {
    if (entries.empty()) throw Error(ErrorCode::EmptyGallery, "cannot index an empty gallery");
    const std::size_t dim = entries.front().dim();
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "zero-dimensional gallery entry");
    std::unordered_set<std::string> ids;
    for (const Embedding& e : entries) {
      if (e.dim() != dim)
        throw Error(ErrorCode::DimensionMismatch, "entry '" + e.source_id + "' has dimension " +
                                                      std::to_string(e.dim()) + ", expected " + std::to_string(dim));
      if (!is_unit(e.values))
        throw Error(ErrorCode::NotNormalized, "entry '" + e.source_id + "' is not unit norm");
      if (!ids.insert(e.source_id).second)
        throw Error(ErrorCode::DuplicateId, "duplicate source_id '" + e.source_id + "'");
    }
    GalleryIndex idx;
    idx.dim_ = dim;
    idx.metric_ = metric;
    idx.entries_ = std::move(entries);
    return idx;
  }

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Metric metric() const { return metric_; }
  const std::vector<Embedding>& entries() const { return entries_; }

  /// The min(k, size) nearest entries to `probe`.
  std::vector<Neighbor> query(std::span<const double> probe, std::size_t k) const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (probe.size() != dim_)
      throw Error(ErrorCode::DimensionMismatch, "probe dimension " + std::to_string(probe.size()) +
                                                    " vs index " + std::to_string(dim_));
    std::vector<Neighbor> all;
    all.reserve(entries_.size());
    for (const Embedding& e : entries_) {
      const double sim = cosine_similarity(probe, e.values);
      all.push_back({e.source_id, e.subject, distance(probe, e.values, sim), sim});
    }
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), closer);
    all.resize(n);
    return all;
  }

  std::vector<Neighbor> query(const Embedding& probe, std::size_t k) const { return query(probe.values, k); }

  /// Majority subject among the k nearest. Ties go to the subject whose
  /// nearest member ranks first; equal distances fall back to the
  /// lexicographically smaller subject.
  std::string classify(std::span<const double> probe, std::size_t k) const {
    const std::vector<Neighbor> nn = query(probe, k);
    struct Tally {
      std::size_t votes = 0;
      double nearest = 0.0;
    };
    std::map<std::string, Tally> tally;
    for (const Neighbor& n : nn) {
      auto [it, fresh] = tally.try_emplace(n.subject);
      if (fresh) it->second.nearest = n.distance;  // nn is ascending
      ++it->second.votes;
    }
    auto best = tally.begin();
    for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
      const Tally& a = it->second;
      const Tally& b = best->second;
      // std::map iterates subjects in lexicographic order, so strict
      // comparisons keep the smaller subject on a full tie.
      if (a.votes > b.votes || (a.votes == b.votes && a.nearest < b.nearest)) best = it;
    }
    return best->first;
  }

  std::string classify(const Embedding& probe, std::size_t k) const { return classify(probe.values, k); }

  static bool closer(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.source_id < b.source_id;
  }

 private:
  double distance(std::span<const double> a, std::span<const double> b, double sim) const {
    if (metric_ == Metric::CosineDistance) return 1.0 - sim;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  }

  std::size_t dim_ = 0;
  Metric metric_ = Metric::CosineDistance;
  std::vector<Embedding> entries_;
};

}  // namespace mufm

#endif  // MUFM_KNN_INDEX_HPP
