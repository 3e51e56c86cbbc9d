#pragma once

#include <vector>

#include "supmer/rng.hpp"
#include "supmer/taskgen.hpp"

namespace supmer {

struct CurriculumState {
  double s = -1.0;        // running alignment score
  double m = 2.0;         // curve parameter, > 1
  double alpha_beta = 0.5;
  double b_min = 1e-3;    // clamp floor: s = -1 would give a degenerate Beta shape
  bool beta_swap = false; // sample Beta(b*alpha, alpha) instead of Beta(alpha, b*alpha)
};

/// b = (m^((1+s)/2) - 1) / (m - 1); monotone in s, 0 at s = -1, 1 at s = 1.
/// Returned pre-clamp; callers clamp to [b_min, 1] before Beta sampling.
double curriculum_b(double s, double m);

/// lambda ~ Beta(alpha, b*alpha) via two gamma draws (or swapped shapes).
double sample_lambda(double alpha_beta, double b, RngStream& rng, bool swap_params = false);

/// Mixup of the query sets: keeps task_i's support untouched, pairs task_j's
/// seeded-shuffled query by index (trimming to the shorter), and convexly
/// combines hidden vectors and soft labels with ratio lambda.
MetaTask interpolate_query(const MetaTask& task_i, const MetaTask& task_j, double lambda,
                           RngStream& rng);

/// Curriculum-based task augmentation over a batch: computes b from the
/// running alignment score, then per task samples a same-format partner from
/// the pool, draws lambda, and interpolates the query set.
std::vector<MetaTask> augment_batch(const std::vector<MetaTask>& batch,
                                    const std::vector<MetaTask>& pool,
                                    const CurriculumState& state, RngStream& rng);

}  // namespace supmer
