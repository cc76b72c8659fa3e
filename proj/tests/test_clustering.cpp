#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "auxcal/clustering.hpp"
#include "auxcal/error.hpp"
#include "oracles.hpp"

using namespace auxcal;

namespace {

std::vector<std::vector<double>> random_points(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (auto& row : x) {
    for (double& v : row) v = g(rng);
  }
  return x;
}

std::vector<std::vector<double>> blobs(std::mt19937_64& rng, std::size_t k, std::size_t per, double sep,
                                       double spread) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<std::vector<double>> x;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < per; ++i) x.push_back({sep * static_cast<double>(c) + g(rng), g(rng)});
  }
  return x;
}

}  // namespace

TEST(Normalize, ZScoreColumn) {
  const EmbeddingMatrix m{Matrix::from_rows({{1, 5}, {2, 5}, {3, 5}}), Normalization::raw, {}};
  const auto z = normalize_embeddings(m, Normalization::per_feature_z);
  EXPECT_EQ(z.normalized, Normalization::per_feature_z);
  EXPECT_NEAR(z.data(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(z.data(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(z.data(2, 0), 1.224744871391589, 1e-12);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(z.data(r, 1), 0.0);
}

TEST(Normalize, L2Rows) {
  const EmbeddingMatrix m{Matrix::from_rows({{3, 4}, {0, 0}}), Normalization::raw, {}};
  const auto l = normalize_embeddings(m, Normalization::l2_row);
  EXPECT_DOUBLE_EQ(l.data(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(l.data(0, 1), 0.8);
  EXPECT_EQ(l.data(1, 0), 0.0);
  EXPECT_EQ(l.zero_rows, std::vector<std::size_t>{1});
}

TEST(Normalize, Errors) {
  const EmbeddingMatrix bad{Matrix::from_rows({{1, NAN}}), Normalization::raw, {}};
  EXPECT_THROW(normalize_embeddings(bad, Normalization::l2_row), Error);
  const EmbeddingMatrix done{Matrix::from_rows({{1, 2}}), Normalization::l2_row, {}};
  EXPECT_THROW(normalize_embeddings(done, Normalization::l2_row), PreconditionError);
}

TEST(Mst, OneDimensionalExample) {
  const auto edges = mutual_reachability_mst(Matrix::from_rows({{0}, {1}, {5}}), 1);
  ASSERT_EQ(edges.size(), 2u);
  std::multiset<std::pair<std::set<std::size_t>, double>> got;
  for (const auto& e : edges) got.insert({{e.u, e.v}, e.weight});
  const std::multiset<std::pair<std::set<std::size_t>, double>> want{{{0, 1}, 1.0}, {{1, 2}, 4.0}};
  EXPECT_EQ(got, want);
}

TEST(Mst, IdenticalPairAndPreconditions) {
  const auto edges = mutual_reachability_mst(Matrix::from_rows({{2, 2}, {2, 2}}), 1);
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0].weight, 0.0);
  EXPECT_THROW(mutual_reachability_mst(Matrix::from_rows({{0}, {1}, {2}}), 3), PreconditionError);
  EXPECT_THROW(mutual_reachability_mst(Matrix::from_rows({{0}}), 1), PreconditionError);
}

TEST(Mst, MatchesBruteForcePrim) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng() % 60, k = 1 + rng() % std::min<std::size_t>(n - 1, 5);
    const auto x = random_points(rng, n, 1 + rng() % 4);
    const auto edges = mutual_reachability_mst(Matrix::from_rows(x), k);
    std::vector<double> w;
    for (const auto& e : edges) w.push_back(e.weight);
    std::sort(w.begin(), w.end());
    const auto want = oracle::mst_weights(x, k);
    ASSERT_EQ(w.size(), want.size());
    for (std::size_t i = 0; i < w.size(); ++i) ASSERT_NEAR(w[i], want[i], 1e-9);
  }
}

TEST(CoreDistance, MatchesSortOracle) {
  std::mt19937_64 rng(9);
  const auto x = random_points(rng, 40, 3);
  EXPECT_EQ(core_distances(Matrix::from_rows(x), 4), oracle::core(x, 4));
}

TEST(Hdbscan, TwoBlobs) {
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 5; ++i) x.push_back({0.02 * i, 0.0});
  for (int i = 0; i < 5; ++i) x.push_back({10.0 + 0.02 * i, 10.0});
  const auto a = cluster_questions(Matrix::from_rows(x), {3, 2});
  EXPECT_EQ(a.clusters.size(), 2u);
  EXPECT_EQ(a.noise_count(), 0u);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(a.labels[i], a.labels[0]);
  for (int i = 6; i < 10; ++i) EXPECT_EQ(a.labels[i], a.labels[5]);
  EXPECT_NE(a.labels[0], a.labels[5]);
}

TEST(Hdbscan, TooFewPointsAreNoise) {
  const auto a = cluster_questions(Matrix::from_rows({{0, 0}, {100, 100}}), {3, 2});
  EXPECT_EQ(a.labels, (std::vector<int>{kNoise, kNoise}));
  EXPECT_TRUE(a.clusters.empty());
}

TEST(Hdbscan, DuplicatedDatasetKeepsStructure) {
  std::mt19937_64 rng(4);
  const auto x = blobs(rng, 3, 8, 20.0, 0.3);
  auto doubled = x;
  doubled.insert(doubled.end(), x.begin(), x.end());
  const auto a = cluster_questions(Matrix::from_rows(x), {3, 2});
  // Doubling every point doubles the neighbour counts, so the density
  // parameters scale with it: self-inclusive k=3 becomes 6.
  const auto b = cluster_questions(Matrix::from_rows(doubled), {6, 5});
  ASSERT_EQ(a.clusters.size(), 3u);
  ASSERT_EQ(b.clusters.size(), 3u);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(b.labels[i], b.labels[i + x.size()]);
    EXPECT_EQ(a.labels[i], b.labels[i]);
  }
}

TEST(Hdbscan, FindsClustersOfMinimumSize) {
  std::vector<std::vector<double>> x;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 3; ++i) x.push_back({100.0 * c + 0.1 * i, 0.0});
  }
  const auto a = cluster_questions(Matrix::from_rows(x), {3, 2});
  EXPECT_EQ(a.clusters.size(), 4u);
  EXPECT_EQ(a.noise_count(), 0u);
}

TEST(Hdbscan, ClustersMeetMinimumSizeAndAgreeWithLabels) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_points(rng, 30 + rng() % 60, 2);
    const HdbscanParams p{3 + rng() % 4, 1 + rng() % 4};
    const auto a = cluster_questions(Matrix::from_rows(x), p);
    std::size_t members = 0;
    for (const auto& [id, rows] : a.clusters) {
      EXPECT_GE(rows.size(), p.min_cluster_size);
      for (auto r : rows) EXPECT_EQ(a.labels[r], id);
      members += rows.size();
    }
    EXPECT_EQ(members + a.noise_count(), x.size());
  }
}

TEST(Hdbscan, PermutationInvariantUpToRelabel) {
  std::mt19937_64 rng(21);
  const auto x = blobs(rng, 4, 12, 8.0, 0.8);
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<double>> y;
  for (auto i : perm) y.push_back(x[i]);
  const auto a = cluster_questions(Matrix::from_rows(x), {3, 2});
  const auto b = cluster_questions(Matrix::from_rows(y), {3, 2});
  std::vector<int> b_back(x.size());
  for (std::size_t k = 0; k < perm.size(); ++k) b_back[perm[k]] = b.labels[k];
  EXPECT_DOUBLE_EQ(oracle::adjusted_rand_index(a.labels, b_back), 1.0);
}

TEST(Hdbscan, ParallelCoreDistancesDoNotChangeResult) {
  std::mt19937_64 rng(2);
  const auto x = random_points(rng, 150, 3);
  const auto m = Matrix::from_rows(x);
  EXPECT_EQ(cluster_questions(m, {3, 2}).labels, cluster_questions(m, {3, 2}).labels);
}

TEST(Targets, Examples) {
  const std::vector<int> labels{0, 0, 0, kNoise, 1, 1};
  const std::vector<std::optional<bool>> correct{true, false, true, true, false, false};
  const auto t = assign_calibration_targets(labels, correct);
  EXPECT_DOUBLE_EQ(t[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t[2], 2.0 / 3.0);
  EXPECT_EQ(t[3], 1.0);
  EXPECT_EQ(t[4], 0.0);
  EXPECT_EQ(t[5], 0.0);
}

TEST(Targets, MissingCorrectnessFails) {
  const std::vector<int> labels{0, 0};
  const std::vector<std::optional<bool>> correct{true, std::nullopt};
  EXPECT_THROW(assign_calibration_targets(labels, correct), PreconditionError);
}

TEST(Quality, DuplicatedQuestionsAndOrthogonalClusters) {
  ClusterAssignment a;
  a.labels = {0, 0, 0, 1, 1, 1};
  a.clusters = {{0, {0, 1, 2}}, {1, {3, 4, 5}}};
  const std::vector<std::string> q{"who won", "who won", "who won", "where is it", "where is it", "where is it"};
  const auto emb = Matrix::from_rows({{1, 0}, {1, 0}, {1, 0}, {0, 1}, {0, 1}, {0, 1}});
  const auto r = evaluate_cluster_quality(a, q, emb, {});
  EXPECT_DOUBLE_EQ(r.textual.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.semantic.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.random_semantic.mean, 0.0);
  EXPECT_DOUBLE_EQ(r.random_textual.mean, 0.0);
  EXPECT_LE(r.textual.count, 200u);
  EXPECT_LE(r.semantic.count, 1000u);
}

TEST(Quality, NeedsTwoRealClusters) {
  ClusterAssignment a;
  a.labels = {0, kNoise};
  a.clusters = {{0, {0}}};
  const std::vector<std::string> q{"a", "b"};
  EXPECT_THROW(evaluate_cluster_quality(a, q, Matrix::from_rows({{1}, {2}}), {}), PreconditionError);
}
