#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "supmer/clustering.hpp"
#include "supmer/rng.hpp"

using namespace supmer;

namespace {

/// Two well-separated blobs of `per_blob` points each.
std::vector<Vec> two_blobs(int per_blob, int dim, double separation, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Vec> points;
  for (int blob = 0; blob < 2; ++blob)
    for (int i = 0; i < per_blob; ++i) {
      Vec p(dim);
      for (int j = 0; j < dim; ++j) p[j] = (blob == 0 ? 0.0 : separation) + 0.3 * rng.gaussian();
      points.push_back(std::move(p));
    }
  return points;
}

}  // namespace

TEST_CASE("K=1 gives the mean; K=n gives zero inertia") {
  RngStream rng(2);
  std::vector<Vec> points;
  for (int i = 0; i < 9; ++i) {
    Vec p(3);
    for (double& v : p) v = rng.gaussian();
    points.push_back(std::move(p));
  }

  KMeansConfig one;
  one.k = 1;
  const ClusterModel m1 = kmeans(points, one);
  Vec mean(3, 0.0);
  for (const Vec& p : points) axpy(1.0, p, mean);
  for (double& v : mean) v /= points.size();
  for (int j = 0; j < 3; ++j) CHECK(m1.centroids(0, j) == doctest::Approx(mean[j]).epsilon(1e-12));
  for (int a : m1.assignment) CHECK(a == 0);

  KMeansConfig all;
  all.k = static_cast<int>(points.size());
  const ClusterModel mn = kmeans(points, all);
  CHECK(mn.inertia == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("matches the exhaustive two-partition oracle on separated 8-point instances") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::vector<Vec> points = two_blobs(4, 2, 6.0, 100 + seed);
    KMeansConfig cfg;
    cfg.k = 2;
    cfg.seed = seed;
    const ClusterModel model = kmeans(points, cfg);
    const double best = oracles::best_two_partition_inertia(points);
    CHECK(model.inertia == doctest::Approx(best).epsilon(1e-9));
    // blob partition recovered
    for (int i = 1; i < 4; ++i) CHECK(model.assignment[i] == model.assignment[0]);
    for (int i = 5; i < 8; ++i) CHECK(model.assignment[i] == model.assignment[4]);
    CHECK(model.assignment[0] != model.assignment[4]);
  }
}

TEST_CASE("objective history is monotone non-increasing") {
  RngStream rng(31);
  std::vector<Vec> points;
  for (int i = 0; i < 200; ++i) {
    Vec p(8);
    for (double& v : p) v = rng.gaussian();
    points.push_back(std::move(p));
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    KMeansConfig cfg;
    cfg.k = 12;
    cfg.seed = seed;
    const ClusterModel model = kmeans(points, cfg);
    REQUIRE(!model.objective_history.empty());
    for (std::size_t i = 1; i < model.objective_history.size(); ++i)
      CHECK(model.objective_history[i] <= model.objective_history[i - 1]);
    // inertia recomputes from the returned fields
    double recomputed = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      recomputed += squared_distance(points[i], model.centroids.row(model.assignment[i]));
    CHECK(model.inertia == doctest::Approx(recomputed).epsilon(1e-12));
  }
}

TEST_CASE("determinism and error cases") {
  const std::vector<Vec> points = two_blobs(8, 3, 4.0, 77);
  KMeansConfig cfg;
  cfg.k = 4;
  cfg.seed = 123;
  const ClusterModel a = kmeans(points, cfg);
  const ClusterModel b = kmeans(points, cfg);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centroids.data == b.centroids.data);

  KMeansConfig too_many;
  too_many.k = 100;
  CHECK_THROWS_AS(kmeans(points, too_many), std::invalid_argument);

  std::vector<Vec> dupes(5, Vec{1.0, 2.0});
  KMeansConfig dup_cfg;
  dup_cfg.k = 3;
  CHECK_THROWS_AS(kmeans(dupes, dup_cfg), std::invalid_argument);
}

TEST_CASE("nearest_cluster: exact hit, tie rule, brute-force agreement") {
  ClusterModel model;
  model.centroids = Mat(3, 2);
  model.centroids(0, 0) = -1.0;
  model.centroids(1, 0) = 1.0;
  model.centroids(2, 0) = 5.0;
  model.centroids(2, 1) = 5.0;

  CHECK(nearest_cluster(model, {5.0, 5.0}) == 2);
  // equidistant between 0 and 1 -> lowest id
  CHECK(nearest_cluster(model, {0.0, 0.0}) == 0);

  RngStream rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec p{rng.gaussian() * 3.0, rng.gaussian() * 3.0};
    int best = 0;
    double best_d = squared_distance(p, model.centroids.row(0));
    for (int c = 1; c < 3; ++c) {
      const double d = squared_distance(p, model.centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    CHECK(nearest_cluster(model, p) == best);
  }
}
