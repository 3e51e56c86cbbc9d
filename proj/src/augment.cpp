#include "supmer/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace supmer {

double curriculum_b(double s, double m) {
  if (!(m > 1.0)) throw std::invalid_argument("curriculum_b: m must be greater than 1");
  if (s < -1.0 || s > 1.0) throw std::invalid_argument("curriculum_b: s must be in [-1, 1]");
  return (std::pow(m, (1.0 + s) / 2.0) - 1.0) / (m - 1.0);
}

double sample_lambda(double alpha_beta, double b, RngStream& rng, bool swap_params) {
  if (!(alpha_beta > 0.0)) throw std::invalid_argument("sample_lambda: alpha must be positive");
  if (!(b > 0.0)) throw std::invalid_argument("sample_lambda: b must be positive (clamp first)");
  const double a1 = swap_params ? b * alpha_beta : alpha_beta;
  const double a2 = swap_params ? alpha_beta : b * alpha_beta;
  return rng.beta(a1, a2);
}

MetaTask interpolate_query(const MetaTask& task_i, const MetaTask& task_j, double lambda,
                           RngStream& rng) {
  if (task_i.format != task_j.format)
    throw std::invalid_argument("interpolate_query: format mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("interpolate_query: lambda must be in [0, 1]");
  const int n = static_cast<int>(std::min(task_i.query.size(), task_j.query.size()));
  if (n == 0) throw std::invalid_argument("interpolate_query: empty query set");

  // seeded shuffle of the partner's query indices, then pair by position
  std::vector<int> order(task_j.query.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }

  MetaTask out;
  out.format = task_i.format;
  out.anchor_cluster = task_i.anchor_cluster;
  out.support = task_i.support;  // retained untouched
  out.query.resize(n);
  for (int k = 0; k < n; ++k) {
    const Example& a = task_i.query[k];
    const Example& b = task_j.query[order[k]];
    if (a.hidden.values.size() != b.hidden.values.size() ||
        a.soft_label.size() != b.soft_label.size())
      throw std::invalid_argument("interpolate_query: example dimension mismatch");
    Example mixed;
    mixed.hidden.format = a.hidden.format;
    mixed.hidden.values.resize(a.hidden.values.size());
    for (std::size_t i = 0; i < a.hidden.values.size(); ++i)
      mixed.hidden.values[i] = (1.0 - lambda) * a.hidden.values[i] + lambda * b.hidden.values[i];
    mixed.soft_label.resize(a.soft_label.size());
    for (std::size_t i = 0; i < a.soft_label.size(); ++i)
      mixed.soft_label[i] = (1.0 - lambda) * a.soft_label[i] + lambda * b.soft_label[i];
    out.query[k] = std::move(mixed);
  }
  return out;
}

std::vector<MetaTask> augment_batch(const std::vector<MetaTask>& batch,
                                    const std::vector<MetaTask>& pool,
                                    const CurriculumState& state, RngStream& rng) {
  if (pool.empty()) throw std::invalid_argument("augment_batch: empty pool");
  if (!(state.b_min > 0.0 && state.b_min < 1.0))
    throw std::invalid_argument("augment_batch: b_min must be in (0, 1)");
  const double b = std::clamp(curriculum_b(state.s, state.m), state.b_min, 1.0);

  std::vector<MetaTask> out;
  out.reserve(batch.size());
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    RngStream slot_rng = rng.child(slot);
    const MetaTask& ti = batch[slot];
    std::vector<int> candidates;
    for (std::size_t p = 0; p < pool.size(); ++p)
      if (pool[p].format == ti.format) candidates.push_back(static_cast<int>(p));
    const MetaTask& tj =
        candidates.empty() ? ti : pool[candidates[slot_rng.below(candidates.size())]];
    const double lambda = sample_lambda(state.alpha_beta, b, slot_rng, state.beta_swap);
    out.push_back(interpolate_query(ti, tj, lambda, slot_rng));
  }
  return out;
}

}  // namespace supmer
