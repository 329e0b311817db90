#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mufm/knn_index.hpp"
#include "test_util.hpp"

using namespace mufm;
using mufm::testing::random_unit;

namespace {

Embedding entry(std::string id, std::string subject, std::vector<double> v) {
  return {l2_normalize(v), std::move(id), std::move(subject), MaskStatus::Unmasked};
}

// Gallery with a few exact duplicate vectors so that tie-breaking is exercised.
std::vector<Embedding> random_gallery(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::vector<Embedding> g;
  for (std::size_t i = 0; i < n; ++i) {
    Embedding e;
    e.source_id = "g" + std::to_string(rng() % 1000000) + "-" + std::to_string(i);
    e.subject = "s" + std::to_string(rng() % 5);
    e.values = (i > 0 && rng() % 4 == 0) ? g[rng() % i].values : random_unit(rng, d);
    g.push_back(std::move(e));
  }
  return g;
}

// Independent oracle: full sort by (distance, source_id) with distances
// computed from scratch.
std::vector<std::pair<std::string, double>> brute_force(const std::vector<Embedding>& g,
                                                        const std::vector<double>& q, std::size_t k, Metric m) {
  std::vector<std::pair<double, std::string>> all;
  for (const auto& e : g) {
    double dd = 0, ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      dd += (q[i] - e.values[i]) * (q[i] - e.values[i]);
      ab += q[i] * e.values[i];
      aa += q[i] * q[i];
      bb += e.values[i] * e.values[i];
    }
    const double dist = m == Metric::Euclidean ? std::sqrt(dd) : 1.0 - ab / std::sqrt(aa * bb);
    all.emplace_back(dist, e.source_id);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.emplace_back(all[i].second, all[i].first);
  return out;
}

}  // namespace

TEST(KnnIndex, HandExample) {
  const auto idx = GalleryIndex::build({entry("a", "alice", {1, 0}), entry("b", "bob", {0, 1}),
                                        entry("c", "carol", {-1, 0})});
  const auto nn = idx.query(std::vector<double>{0.9, 0.1}, 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].source_id, "a");
  EXPECT_EQ(nn[0].subject, "alice");
  EXPECT_EQ(nn[1].source_id, "b");
  EXPECT_NEAR(nn[0].distance, 1.0 - nn[0].similarity, 1e-15);
}

TEST(KnnIndex, KLargerThanGalleryReturnsAll) {
  const auto idx = GalleryIndex::build({entry("a", "x", {1, 0}), entry("b", "y", {0, 1})});
  EXPECT_EQ(idx.query(std::vector<double>{1, 1}, 10).size(), 2u);
  EXPECT_THROW(idx.query(std::vector<double>{1, 1}, 0), Error);
}

TEST(KnnIndex, TiesBrokenBySourceId) {
  const auto idx = GalleryIndex::build({entry("zed", "z", {1, 0}), entry("amy", "a", {1, 0}),
                                        entry("mid", "m", {0, 1})});
  const auto nn = idx.query(std::vector<double>{1, 0}, 3);
  EXPECT_EQ(nn[0].source_id, "amy");
  EXPECT_EQ(nn[1].source_id, "zed");
  EXPECT_EQ(nn[2].source_id, "mid");
}

TEST(KnnIndex, BuildValidation) {
  auto code = [](std::vector<Embedding> g) {
    try {
      GalleryIndex::build(std::move(g));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code({}), ErrorCode::EmptyGallery);
  EXPECT_EQ(code({entry("a", "x", {1, 0}), entry("b", "x", {1, 0, 0})}), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code({Embedding{{3, 4}, "a", "x", MaskStatus::Unmasked}}), ErrorCode::NotNormalized);
  EXPECT_EQ(code({entry("a", "x", {1, 0}), entry("a", "y", {0, 1})}), ErrorCode::DuplicateId);
}

TEST(KnnIndex, QueryDimensionChecked) {
  const auto idx = GalleryIndex::build({entry("a", "x", {1, 0})});
  try {
    idx.query(std::vector<double>{1, 0, 0}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(KnnIndex, PropertyMatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 50, d = 1 + rng() % 16, k = 1 + rng() % 7;
    const auto g = random_gallery(rng, n, d);
    const Metric m = trial % 2 ? Metric::Euclidean : Metric::CosineDistance;
    const auto idx = GalleryIndex::build(g, m);
    const auto q = random_unit(rng, d);
    const auto got = idx.query(q, k);
    const auto want = brute_force(g, q, k, m);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].source_id, want[i].first) << "trial " << trial;
      EXPECT_NEAR(got[i].distance, want[i].second, 1e-12);
    }
  }
}

TEST(KnnIndex, PropertyEuclideanAndCosineOrderAgree) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 50, d = 2 + rng() % 15;
    const auto g = random_gallery(rng, n, d);
    const auto q = random_unit(rng, d);
    const auto a = GalleryIndex::build(g, Metric::CosineDistance).query(q, n);
    const auto b = GalleryIndex::build(g, Metric::Euclidean).query(q, n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(a[i].source_id, b[i].source_id);
      // |a - b|^2 = 2 - 2 cos for unit vectors.
      EXPECT_NEAR(b[i].distance * b[i].distance, 2.0 * a[i].distance, 1e-12);
    }
  }
}

TEST(KnnIndex, PropertyDistancesAscending) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_gallery(rng, 40, 8);
    const auto nn = GalleryIndex::build(g).query(random_unit(rng, 8), 40);
    for (std::size_t i = 1; i < nn.size(); ++i) EXPECT_TRUE(GalleryIndex::closer(nn[i - 1], nn[i]));
  }
}

TEST(KnnIndex, ClassifyMajorityAndTies) {
  const auto idx = GalleryIndex::build({entry("a1", "alice", {1, 0.1}), entry("b1", "bob", {1, 0}),
                                        entry("a2", "alice", {1, 0.2}), entry("c1", "carol", {-1, 0})});
  // k=1: nearest wins.
  EXPECT_EQ(idx.classify(std::vector<double>{1, 0}, 1), "bob");
  // k=3: alice has two votes.
  EXPECT_EQ(idx.classify(std::vector<double>{1, 0}, 3), "alice");
  // k=2: one vote each, bob is nearer.
  EXPECT_EQ(idx.classify(std::vector<double>{1, 0}, 2), "bob");
}

TEST(KnnIndex, ClassifyFullTieGoesToSmallerSubject) {
  const auto idx = GalleryIndex::build({entry("x", "zoe", {1, 0}), entry("y", "adam", {0, 1})});
  EXPECT_EQ(idx.classify(std::vector<double>{1, 1}, 2), "adam");
}
