#include "supmer/clustering.hpp"

#include <limits>
#include <stdexcept>

#include "supmer/rng.hpp"

namespace supmer {
namespace {

int argmin_centroid(const Mat& centroids, const Vec& point) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows; ++c) {
    double d = 0.0;
    const double* row = centroids.data.data() + static_cast<std::size_t>(c) * centroids.cols;
    for (int j = 0; j < centroids.cols; ++j) {
      const double diff = point[j] - row[j];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lowest id
      best_d = d;
      best = c;
    }
  }
  return best;
}

double objective(const std::vector<Vec>& points, const Mat& centroids,
                 const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double* row =
        centroids.data.data() + static_cast<std::size_t>(assignment[i]) * centroids.cols;
    for (int j = 0; j < centroids.cols; ++j) {
      const double diff = points[i][j] - row[j];
      total += diff * diff;
    }
  }
  return total;
}

}  // namespace

ClusterModel kmeans(const std::vector<Vec>& points, const KMeansConfig& cfg) {
  const int n = static_cast<int>(points.size());
  if (cfg.k < 1) throw std::invalid_argument("kmeans: K must be at least 1");
  if (n < cfg.k) throw std::invalid_argument("kmeans: more clusters than points");
  if (cfg.tol < 0.0) throw std::invalid_argument("kmeans: tol must be non-negative");
  if (cfg.max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be positive");
  const int d = static_cast<int>(points[0].size());
  if (d == 0) throw std::invalid_argument("kmeans: zero-dimensional points");
  for (const Vec& p : points)
    if (static_cast<int>(p.size()) != d) throw std::invalid_argument("kmeans: ragged points");

  RngStream rng(cfg.seed);

  // k-means++ seeding: first centroid uniform, the rest D^2-weighted.
  Mat centroids(cfg.k, d);
  std::vector<double> dist2(n);
  {
    const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    for (int j = 0; j < d; ++j) centroids(0, j) = points[first][j];
    for (int i = 0; i < n; ++i) dist2[i] = squared_distance(points[i], points[first]);
  }
  for (int c = 1; c < cfg.k; ++c) {
    double total = 0.0;
    for (double v : dist2) total += v;
    if (!(total > 0.0)) throw std::invalid_argument("kmeans: fewer than K distinct points");
    const double u = rng.uniform01() * total;
    int pick = -1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += dist2[i];
      if (dist2[i] > 0.0) pick = i;
      if (acc >= u && dist2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    for (int j = 0; j < d; ++j) centroids(c, j) = points[pick][j];
    for (int i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], squared_distance(points[i], points[pick]));
  }

  std::vector<int> assignment(n, 0);
  std::vector<double> history;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Mat saved_centroids = centroids;
    const std::vector<int> saved_assignment = assignment;

    for (int i = 0; i < n; ++i) assignment[i] = argmin_centroid(centroids, points[i]);

    std::vector<int> counts(cfg.k, 0);
    for (int a : assignment) ++counts[a];

    // Re-seed each empty cluster from the point farthest from its assigned
    // centroid, taken from a cluster that can spare one.
    for (int e = 0; e < cfg.k; ++e) {
      if (counts[e] > 0) continue;
      int donor = -1;
      double worst = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[assignment[i]] < 2) continue;
        const double dd = squared_distance(points[i], centroids.row(assignment[i]));
        if (dd > worst) {
          worst = dd;
          donor = i;
        }
      }
      if (donor < 0) break;  // nothing to donate; leave empty, mean update skips it
      --counts[assignment[donor]];
      assignment[donor] = e;
      ++counts[e];
    }

    // Update step: centroids become the means of their members.
    Mat sums(cfg.k, d);
    for (int i = 0; i < n; ++i) {
      double* row = sums.data.data() + static_cast<std::size_t>(assignment[i]) * d;
      for (int j = 0; j < d; ++j) row[j] += points[i][j];
    }
    for (int c = 0; c < cfg.k; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / counts[c];
      for (int j = 0; j < d; ++j) centroids(c, j) = sums(c, j) * inv;
    }

    const double obj = objective(points, centroids, assignment);
    if (obj > prev_obj) {
      // Can only happen through floating-point noise at convergence; never
      // accept a worse state.
      centroids = saved_centroids;
      assignment = saved_assignment;
      break;
    }
    history.push_back(obj);
    const double improvement = prev_obj - obj;
    prev_obj = obj;
    if (improvement < cfg.tol) break;
  }

  // The invariant is on the returned fields: every assignment is the argmin
  // of the final centroids.
  for (int i = 0; i < n; ++i) assignment[i] = argmin_centroid(centroids, points[i]);

  ClusterModel model;
  model.centroids = std::move(centroids);
  model.assignment = std::move(assignment);
  model.inertia = objective(points, model.centroids, model.assignment);
  model.objective_history = std::move(history);
  return model;
}

int nearest_cluster(const ClusterModel& model, const Vec& embedding) {
  if (static_cast<int>(embedding.size()) != model.centroids.cols)
    throw std::invalid_argument("nearest_cluster: dimension mismatch");
  return argmin_centroid(model.centroids, embedding);
}

}  // namespace supmer
