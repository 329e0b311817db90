#ifndef MUFM_MATCHER_HPP
#define MUFM_MATCHER_HPP

#include <algorithm>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mufm/embedding.hpp"
#include "mufm/error.hpp"
#include "mufm/knn_index.hpp"

namespace mufm {

inline constexpr double kDefaultThreshold = 0.70;

struct MatchConfig {
  std::size_t shortlist_k = 5;
  double threshold = kDefaultThreshold;
  bool require_unmasked_gallery = true;

  void validate() const {
    if (shortlist_k < 1) throw Error(ErrorCode::InvalidArgument, "shortlist_k must be >= 1");
    if (!(threshold >= -1.0 && threshold <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "threshold must lie in [-1, 1]");
  }
};

struct ShortlistEntry {
  std::string source_id;
  double similarity = 0.0;

  friend bool operator==(const ShortlistEntry&, const ShortlistEntry&) = default;
};

struct MatchResult {
  std::string probe_id;
  std::optional<std::string> best_id;
  std::optional<std::string> best_subject;
  double similarity = 0.0;
  bool accepted = false;
  double threshold = kDefaultThreshold;
  std::vector<ShortlistEntry> shortlist;  // descending similarity, ties by source_id

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Shortlists the K nearest gallery entries, scores them by cosine
/// similarity and accepts the best one when it reaches the threshold.
/// A rejection is a normal result, not an error.
inline MatchResult match(const Embedding& probe, const GalleryIndex& index, const MatchConfig& cfg = {}) {
  cfg.validate();
  if (index.empty()) throw Error(ErrorCode::EmptyGallery, "gallery is empty");
  if (probe.dim() != index.dimension())
    throw Error(ErrorCode::DimensionMismatch, "probe '" + probe.source_id + "' has dimension " +
                                                  std::to_string(probe.dim()) + ", gallery " +
                                                  std::to_string(index.dimension()));
  if (cfg.require_unmasked_gallery) {
    for (const Embedding& e : index.entries())
      if (e.mask_status == MaskStatus::Masked)
        throw Error(ErrorCode::MaskRoleViolation, "gallery entry '" + e.source_id + "' is masked");
  }

  const std::vector<double> unit = l2_normalize(probe.values);
  const std::vector<Neighbor> nn = index.query(unit, cfg.shortlist_k);

  MatchResult r;
  r.probe_id = probe.source_id;
  r.threshold = cfg.threshold;
  r.shortlist.reserve(nn.size());
  for (const Neighbor& n : nn) r.shortlist.push_back({n.source_id, n.similarity});
  // Distance order already matches descending similarity for the cosine
  // metric; re-sorting makes the contract hold for the Euclidean one too.
  std::stable_sort(r.shortlist.begin(), r.shortlist.end(), [](const ShortlistEntry& a, const ShortlistEntry& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.source_id < b.source_id;
  });

  const ShortlistEntry& best = r.shortlist.front();
  r.best_id = best.source_id;
  r.similarity = best.similarity;
  for (const Neighbor& n : nn)
    if (n.source_id == best.source_id) r.best_subject = n.subject;
  r.accepted = r.similarity >= cfg.threshold;
  return r;
}

/// Elementwise match(), order preserved.
inline std::vector<MatchResult> match_all(std::span<const Embedding> probes, const GalleryIndex& index,
                                          const MatchConfig& cfg = {}) {
  std::vector<MatchResult> out;
  out.reserve(probes.size());
  for (const Embedding& p : probes) out.push_back(match(p, index, cfg));
  return out;
}

struct SweepPoint {
  double threshold = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

/// Verification accuracy (genuine accepted + impostor rejected) / total at
/// every candidate threshold: -1, +1 and the midpoints between adjacent
/// distinct scores. A score s is accepted at threshold t when s >= t.
/// Either list may be empty, but not both.
inline std::vector<SweepPoint> threshold_sweep(std::vector<double> genuine, std::vector<double> impostor) {
  const std::size_t total = genuine.size() + impostor.size();
  if (total == 0) throw Error(ErrorCode::EmptyScores, "no scores to sweep");
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  std::vector<double> scores;
  scores.reserve(total);
  std::merge(genuine.begin(), genuine.end(), impostor.begin(), impostor.end(), std::back_inserter(scores));
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  std::vector<double> candidates{-1.0, 1.0};
  for (std::size_t i = 1; i < scores.size(); ++i) candidates.push_back(scores[i - 1] + (scores[i] - scores[i - 1]) / 2.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<SweepPoint> sweep;
  sweep.reserve(candidates.size());
  for (double t : candidates) {
    const auto accepted_genuine = static_cast<std::size_t>(
        genuine.end() - std::lower_bound(genuine.begin(), genuine.end(), t));
    const auto rejected_impostor = static_cast<std::size_t>(
        std::lower_bound(impostor.begin(), impostor.end(), t) - impostor.begin());
    sweep.push_back({t, static_cast<double>(accepted_genuine + rejected_impostor) / static_cast<double>(total)});
  }
  return sweep;
}

struct Calibration {
  double threshold = kDefaultThreshold;
  double accuracy = 0.0;
};

/// The sweep point with maximal accuracy; ties resolve to the larger threshold.
inline Calibration calibrate_threshold(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty())
    throw Error(ErrorCode::EmptyScores, "calibration needs genuine and impostor scores");
  const auto sweep = threshold_sweep({genuine.begin(), genuine.end()}, {impostor.begin(), impostor.end()});
  Calibration best{sweep.front().threshold, sweep.front().accuracy};
  for (const SweepPoint& p : sweep)
    if (p.accuracy >= best.accuracy) best = {p.threshold, p.accuracy};
  return best;
}

/// Genuine score: similarity to the best gallery entry of the probe's own
/// subject. Impostor score: similarity to the best entry of any other subject.
/// Probes whose subject is absent from the gallery contribute only an impostor score.
struct ScoreSets {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

inline ScoreSets collect_scores(std::span<const Embedding> probes, const GalleryIndex& index) {
  ScoreSets s;
  for (const Embedding& p : probes) {
    std::optional<double> own, other;
    for (const Embedding& g : index.entries()) {
      const double sim = cosine_similarity(p.values, g.values);
      auto& slot = (g.subject == p.subject) ? own : other;
      if (!slot || sim > *slot) slot = sim;
    }
    if (own) s.genuine.push_back(*own);
    if (other) s.impostor.push_back(*other);
  }
  return s;
}

}  // namespace mufm

#endif  // MUFM_MATCHER_HPP
