#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "supmer/clustering.hpp"
#include "supmer/corpus.hpp"
#include "supmer/encoder.hpp"

namespace supmer {

struct Example {
  Hidden hidden;
  Vec soft_label;  // on the probability simplex; dim 3 (sp) or 4 (mc/ss)
};

struct MetaTask {
  TaskFormat format = TaskFormat::sp;
  int anchor_cluster = -1;
  std::vector<Example> support;
  std::vector<Example> query;
};

/// Pair labels: 0 = adjacent, 1 = different documents, 2 = same document but
/// not adjacent. The similarity sub-task reuses 0 (same cluster) and 1
/// (different cluster) and never emits 2.
inline constexpr int kPairLabels = 3;
inline constexpr int kChoiceLabels = 4;

struct TaskGenConfig {
  int support_size = 32;
  int query_size = 32;
  int tasks_per_cluster = 2;
  double pair_subtask_mix = 0.5;  // share of adjacency-style examples vs cluster-similarity
  int min_cluster_sentences = 8;
  int max_sample_retries = 200;
  std::uint64_t seed = 0;
};

/// Precomputed per-sentence embeddings plus the cluster membership lists;
/// the encoder is frozen, so materializing once is exact.
struct CorpusIndex {
  std::vector<std::pair<int, int>> refs;        // flat id -> (doc, pos)
  std::vector<Vec> embeddings;                  // flat id -> unit embedding
  std::vector<std::vector<int>> doc_sentences;  // doc -> flat ids
  std::vector<std::vector<int>> cluster_members;  // cluster -> flat ids
};

CorpusIndex build_index(const Corpus& corpus, const Encoder& encoder, const ClusterModel& clusters);

/// As above, but over caller-supplied per-sentence embeddings (flat order).
CorpusIndex build_index(const Corpus& corpus, std::vector<Vec> embeddings,
                        const ClusterModel& clusters);

std::vector<MetaTask> make_sentence_pair_tasks(const Corpus& corpus, const ClusterModel& clusters,
                                               const CorpusIndex& index, const TaskGenConfig& cfg);

std::vector<MetaTask> make_multi_choice_tasks(const Corpus& corpus, const ClusterModel& clusters,
                                              const CorpusIndex& index, const TaskGenConfig& cfg);

std::vector<MetaTask> make_single_sentence_tasks(const ClusterModel& clusters,
                                                 const CorpusIndex& index,
                                                 const TaskGenConfig& cfg);

/// Disjoint seeded split of a task's examples into support and query.
std::pair<std::vector<Example>, std::vector<Example>> episode_split(
    const std::vector<Example>& examples, int support_size, int query_size, RngStream& rng);

}  // namespace supmer
