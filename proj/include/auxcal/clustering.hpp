#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "auxcal/embedding.hpp"

namespace auxcal {

inline constexpr int kNoise = -1;

struct WeightedEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;
};

struct HdbscanParams {
  std::size_t min_cluster_size = 3;
  // Neighbours counted for the core distance, the point itself excluded.
  // 2 here is the same density as a min_samples of 3 in implementations
  // that count the point itself.
  std::size_t min_samples = 2;
};

struct ClusterAssignment {
  std::vector<int> labels;
  // cluster id -> member row indices (ascending). Noise is not listed.
  std::map<int, std::vector<std::size_t>> clusters;
  HdbscanParams params;

  std::size_t noise_count() const;
};

struct SeriesSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct ClusterQualityReport {
  SeriesSummary textual;
  SeriesSummary semantic;
  SeriesSummary random_textual;
  SeriesSummary random_semantic;
};

struct ClusterQualityOptions {
  std::uint64_t seed = 0;
  std::size_t n_rouge = 200;
  std::size_t n_cos = 1000;
  std::size_t per_cluster = 5;
};

EmbeddingMatrix normalize_embeddings(const EmbeddingMatrix& m, Normalization mode);

// Core distance of each row: distance to its k-th nearest other row.
std::vector<double> core_distances(const Matrix& points, std::size_t min_samples);

// Minimum spanning tree over mutual-reachability distances (Prim, O(N^2)).
// Edges come out in the order Prim adds them; ties go to the lowest index.
std::vector<WeightedEdge> mutual_reachability_mst(const Matrix& points, std::size_t min_samples);

// Full HDBSCAN with excess-of-mass cluster selection. Cluster ids are
// numbered 0..K-1 in order of each cluster's smallest member row.
ClusterAssignment cluster_questions(const Matrix& points, const HdbscanParams& params = {});

// Mean correctness of each record's cluster; noise records keep their own
// correctness. Throws PreconditionError when any correctness is missing.
std::vector<double> assign_calibration_targets(std::span<const int> labels,
                                               std::span<const std::optional<bool>> correctness);

ClusterQualityReport evaluate_cluster_quality(const ClusterAssignment& assignment,
                                              std::span<const std::string> questions,
                                              const Matrix& embeddings,
                                              const ClusterQualityOptions& options = {});

}  // namespace auxcal
