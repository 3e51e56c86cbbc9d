#pragma once

// Shared builders for small random task pools used across test files.

#include "supmer/metalearn.hpp"
#include "supmer/rng.hpp"
#include "supmer/taskgen.hpp"

namespace fixtures {

inline supmer::Example random_example(supmer::HiddenFormat format, int dh, supmer::RngStream& rng) {
  supmer::Example ex;
  ex.hidden.format = format;
  ex.hidden.values.resize((format == supmer::HiddenFormat::sp ? 3 : 5) * dh);
  for (double& v : ex.hidden.values) v = rng.gaussian();
  const int dim = format == supmer::HiddenFormat::sp ? supmer::kPairLabels : supmer::kChoiceLabels;
  ex.soft_label.assign(dim, 0.0);
  ex.soft_label[rng.below(static_cast<std::uint64_t>(dim))] = 1.0;
  return ex;
}

inline supmer::MetaTask random_task(supmer::TaskFormat format, int dh, int support, int query,
                                    supmer::RngStream& rng) {
  supmer::MetaTask t;
  t.format = format;
  t.anchor_cluster = 0;
  const supmer::HiddenFormat hf = supmer::hidden_format_of(format);
  for (int i = 0; i < support; ++i) t.support.push_back(random_example(hf, dh, rng));
  for (int i = 0; i < query; ++i) t.query.push_back(random_example(hf, dh, rng));
  return t;
}

inline std::vector<supmer::MetaTask> random_pool(int n_tasks, int dh, int support, int query,
                                                 std::uint64_t seed) {
  supmer::RngStream rng(seed);
  std::vector<supmer::MetaTask> pool;
  for (int i = 0; i < n_tasks; ++i) {
    const supmer::TaskFormat f = i % 2 == 0 ? supmer::TaskFormat::sp : supmer::TaskFormat::mc;
    pool.push_back(random_task(f, dh, support, query, rng));
  }
  return pool;
}

}  // namespace fixtures
