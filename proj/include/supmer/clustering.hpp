#pragma once

#include <cstdint>
#include <vector>

#include "supmer/linalg.hpp"

namespace supmer {

struct ClusterModel {
  Mat centroids;                // K x d
  std::vector<int> assignment;  // point index -> cluster id
  double inertia = 0.0;         // sum of squared distances to assigned centroid
  std::vector<double> objective_history;  // one value per Lloyd iteration

  int k() const { return centroids.rows; }
};

struct KMeansConfig {
  int k = 16;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-10;  // stop when per-iteration improvement falls below
};

/// Lloyd iterations from a k-means++ seeding. Ties in the assignment step go
/// to the lowest cluster id; an empty cluster is re-seeded from the point
/// currently farthest from its assigned centroid. The recorded objective is
/// non-increasing: a final iteration that fails to improve is rolled back.
ClusterModel kmeans(const std::vector<Vec>& points, const KMeansConfig& cfg);

/// Argmin Euclidean distance over centroids; ties go to the lowest id.
int nearest_cluster(const ClusterModel& model, const Vec& embedding);

}  // namespace supmer
