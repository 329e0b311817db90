#ifndef MUFM_EMBEDDING_HPP
#define MUFM_EMBEDDING_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mufm/error.hpp"
#include "mufm/imaging.hpp"
#include "mufm/mask_status.hpp"

namespace mufm {

inline constexpr std::size_t kDefaultEmbeddingDim = 512;

// Norms at or below this are treated as the zero vector.
inline constexpr double kZeroNormTolerance = 1e-12;

// Tolerance for "unit norm" checks on embeddings that went through 32-bit storage.
inline constexpr double kUnitNormTolerance = 1e-6;

/// Fixed-length face descriptor. Values are kept in double; files store float.
struct Embedding {
  std::vector<double> values;
  std::string source_id;
  std::string subject;  // empty when unlabeled
  MaskStatus mask_status = MaskStatus::Unknown;

  std::size_t dim() const { return values.size(); }

  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Sequential double-precision dot product. The summation order is fixed so
/// results are reproducible bit for bit.
inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch,
                "dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > kZeroNormTolerance)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

inline bool is_unit(std::span<const double> v, double tol = kUnitNormTolerance) {
  return std::abs(l2_norm(v) - 1.0) <= tol;
}

/// (a . b) / (|a| |b|), clamped to [-1, 1].
///
/// Symmetric bit for bit: every step is commutative in a and b.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch,
                "cosine: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (!(na > kZeroNormTolerance) || !(nb > kZeroNormTolerance))
    throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  return cosine_similarity(a.values, b.values);
}

/// Per-channel spatial mean of an (H, W, C) map.
inline std::vector<double> global_average_pool(const Tensor3& map) {
  if (map.height < 1 || map.width < 1 || map.channels < 1)
    throw Error(ErrorCode::InvalidArgument, "global_average_pool: empty feature map");
  if (map.values.size() != static_cast<std::size_t>(map.height) * map.width * map.channels)
    throw Error(ErrorCode::InvalidArgument, "global_average_pool: value count does not match dims");
  std::vector<double> out(map.channels, 0.0);
  const std::size_t positions = static_cast<std::size_t>(map.height) * map.width;
  for (std::size_t p = 0; p < positions; ++p) {
    const double* px = map.values.data() + p * map.channels;
    for (int c = 0; c < map.channels; ++c) out[c] += px[c];
  }
  for (double& v : out) v /= static_cast<double>(positions);
  return out;
}

/// Row-major P x G matrix of cosine similarities.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

inline SimilarityMatrix similarity_matrix(std::span<const Embedding> probes,
                                          std::span<const Embedding> gallery) {
  SimilarityMatrix m{probes.size(), gallery.size(), {}};
  m.values.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (std::size_t j = 0; j < gallery.size(); ++j)
      m.values[i * m.cols + j] = cosine_similarity(probes[i].values, gallery[j].values);
  return m;
}

}  // namespace mufm

#endif  // MUFM_EMBEDDING_HPP
