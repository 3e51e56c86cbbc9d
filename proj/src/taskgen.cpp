#include "supmer/taskgen.hpp"

#include <array>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <tuple>

namespace supmer {
namespace {

constexpr std::uint64_t kTagPair = 11;
constexpr std::uint64_t kTagChoice = 12;
constexpr std::uint64_t kTagSingle = 13;

Vec one_hot(int dim, int idx) {
  Vec y(dim, 0.0);
  y[idx] = 1.0;
  return y;
}

int pick(const std::vector<int>& ids, RngStream& rng) {
  return ids[rng.below(ids.size())];
}

/// Uniform flat id whose document differs from `doc` (and optionally whose
/// cluster differs from `cluster`); nullopt after bounded retries.
std::optional<int> sample_outside(const CorpusIndex& index, const ClusterModel& clusters, int doc,
                                  int cluster, int retries, RngStream& rng) {
  const int n = static_cast<int>(index.refs.size());
  for (int r = 0; r < retries; ++r) {
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (index.refs[i].first == doc) continue;
    if (cluster >= 0 && clusters.assignment[i] == cluster) continue;
    return i;
  }
  return std::nullopt;
}

void warn_skip(const char* what, int cluster) {
  std::cerr << "warning: skipping cluster " << cluster << " for " << what
            << " (not enough material)\n";
}

}  // namespace

CorpusIndex build_index(const Corpus& corpus, const Encoder& encoder,
                        const ClusterModel& clusters) {
  std::vector<Vec> embeddings;
  embeddings.reserve(corpus.sentence_count());
  for (const auto& ref : corpus.flat_refs()) embeddings.push_back(encoder.embed(corpus.sentence(ref)));
  return build_index(corpus, std::move(embeddings), clusters);
}

CorpusIndex build_index(const Corpus& corpus, std::vector<Vec> embeddings,
                        const ClusterModel& clusters) {
  CorpusIndex index;
  index.refs = corpus.flat_refs();
  const int n = static_cast<int>(index.refs.size());
  if (static_cast<int>(clusters.assignment.size()) != n ||
      static_cast<int>(embeddings.size()) != n)
    throw std::invalid_argument("build_index: clustering does not cover the corpus");
  index.embeddings = std::move(embeddings);
  index.doc_sentences.resize(corpus.documents.size());
  index.cluster_members.resize(clusters.k());
  for (int i = 0; i < n; ++i) {
    index.doc_sentences[index.refs[i].first].push_back(i);
    index.cluster_members[clusters.assignment[i]].push_back(i);
  }
  return index;
}

std::pair<std::vector<Example>, std::vector<Example>> episode_split(
    const std::vector<Example>& examples, int support_size, int query_size, RngStream& rng) {
  if (support_size < 1 || query_size < 1)
    throw std::invalid_argument("episode_split: sizes must be positive");
  const int n = static_cast<int>(examples.size());
  if (n < support_size + query_size)
    throw std::invalid_argument("episode_split: insufficient examples");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<Example> support, query;
  support.reserve(support_size);
  query.reserve(query_size);
  for (int i = 0; i < support_size; ++i) support.push_back(examples[order[i]]);
  for (int i = 0; i < query_size; ++i) query.push_back(examples[order[support_size + i]]);
  return {std::move(support), std::move(query)};
}

std::vector<MetaTask> make_sentence_pair_tasks(const Corpus& corpus, const ClusterModel& clusters,
                                               const CorpusIndex& index,
                                               const TaskGenConfig& cfg) {
  const int n_docs = static_cast<int>(corpus.documents.size());
  const int episode = cfg.support_size + cfg.query_size;
  RngStream root = RngStream(cfg.seed).child(kTagPair);
  std::vector<MetaTask> tasks;

  for (int c = 0; c < clusters.k(); ++c) {
    const std::vector<int>& members = index.cluster_members[c];
    if (static_cast<int>(members.size()) < cfg.min_cluster_sentences) {
      warn_skip("sentence-pair tasks", c);
      continue;
    }
    for (int t = 0; t < cfg.tasks_per_cluster; ++t) {
      RngStream rng = root.child(static_cast<std::uint64_t>(c)).child(static_cast<std::uint64_t>(t));
      std::vector<Example> examples;
      examples.reserve(episode);
      bool aborted = false;
      while (static_cast<int>(examples.size()) < episode && !aborted) {
        const bool adjacency_flavor = rng.uniform01() < cfg.pair_subtask_mix;
        std::optional<std::pair<int, int>> made;  // (partner flat id, label)
        int anchor = -1;
        for (int retry = 0; retry < cfg.max_sample_retries && !made; ++retry) {
          anchor = pick(members, rng);
          const auto [doc, pos] = index.refs[anchor];
          const std::vector<int>& doc_ids = index.doc_sentences[doc];
          const int doc_len = static_cast<int>(doc_ids.size());
          if (adjacency_flavor) {
            // Next-sentence labels: adjacent -> 0, different document -> 1,
            // same document non-adjacent -> 2.
            std::vector<int> feasible;
            if (doc_len >= 2) feasible.push_back(0);
            if (n_docs >= 2) feasible.push_back(1);
            if (doc_len >= 3) feasible.push_back(2);
            if (feasible.empty()) continue;
            const int label = feasible[rng.below(feasible.size())];
            if (label == 0) {
              std::vector<int> neigh;
              if (pos > 0) neigh.push_back(doc_ids[pos - 1]);
              if (pos + 1 < doc_len) neigh.push_back(doc_ids[pos + 1]);
              made = {pick(neigh, rng), 0};
            } else if (label == 1) {
              if (auto p = sample_outside(index, clusters, doc, -1, cfg.max_sample_retries, rng))
                made = {*p, 1};
            } else {
              std::vector<int> far;
              for (int j = 0; j < doc_len; ++j)
                if (std::abs(j - pos) >= 2) far.push_back(doc_ids[j]);
              if (!far.empty()) made = {pick(far, rng), 2};
            }
          } else {
            // Similarity labels: same cluster -> 0, different cluster -> 1.
            const int label = static_cast<int>(rng.below(2));
            if (label == 0) {
              if (members.size() < 2) continue;
              int partner = anchor;
              while (partner == anchor) partner = pick(members, rng);
              made = {partner, 0};
            } else {
              if (auto p = sample_outside(index, clusters, -1, c, cfg.max_sample_retries, rng))
                made = {*p, 1};
            }
          }
        }
        if (!made) {
          aborted = true;
          break;
        }
        Example ex;
        ex.hidden = compose_pair(index.embeddings[anchor], index.embeddings[made->first]);
        ex.soft_label = one_hot(kPairLabels, made->second);
        examples.push_back(std::move(ex));
      }
      if (aborted) {
        warn_skip("sentence-pair tasks", c);
        break;
      }
      MetaTask task;
      task.format = TaskFormat::sp;
      task.anchor_cluster = c;
      RngStream split_rng = rng.child(999);
      std::tie(task.support, task.query) =
          episode_split(examples, cfg.support_size, cfg.query_size, split_rng);
      tasks.push_back(std::move(task));
    }
  }
  return tasks;
}

std::vector<MetaTask> make_multi_choice_tasks(const Corpus& corpus, const ClusterModel& clusters,
                                              const CorpusIndex& index, const TaskGenConfig& cfg) {
  (void)corpus;
  const int episode = cfg.support_size + cfg.query_size;
  RngStream root = RngStream(cfg.seed).child(kTagChoice);
  std::vector<MetaTask> tasks;

  for (int c = 0; c < clusters.k(); ++c) {
    const std::vector<int>& members = index.cluster_members[c];
    if (static_cast<int>(members.size()) < cfg.min_cluster_sentences) {
      warn_skip("multi-choice tasks", c);
      continue;
    }
    for (int t = 0; t < cfg.tasks_per_cluster; ++t) {
      RngStream rng = root.child(static_cast<std::uint64_t>(c)).child(static_cast<std::uint64_t>(t));
      std::vector<Example> examples;
      examples.reserve(episode);
      bool aborted = false;
      while (static_cast<int>(examples.size()) < episode && !aborted) {
        const bool adjacency_flavor = rng.uniform01() < cfg.pair_subtask_mix;
        bool built = false;
        for (int retry = 0; retry < cfg.max_sample_retries && !built; ++retry) {
          const int anchor = pick(members, rng);
          const auto [doc, pos] = index.refs[anchor];
          int correct = -1;
          if (adjacency_flavor) {
            const std::vector<int>& doc_ids = index.doc_sentences[doc];
            std::vector<int> neigh;
            if (pos > 0) neigh.push_back(doc_ids[pos - 1]);
            if (pos + 1 < static_cast<int>(doc_ids.size())) neigh.push_back(doc_ids[pos + 1]);
            if (neigh.empty()) continue;
            correct = pick(neigh, rng);
          } else {
            if (members.size() < 2) continue;
            correct = anchor;
            while (correct == anchor) correct = pick(members, rng);
          }
          // Negatives avoid the anchor's document and cluster entirely.
          std::array<int, 3> negatives{};
          bool ok = true;
          for (int k = 0; k < 3 && ok; ++k) {
            auto neg = sample_outside(index, clusters, doc, c, cfg.max_sample_retries, rng);
            if (!neg) {
              ok = false;
              break;
            }
            for (int j = 0; j < k; ++j)
              if (negatives[j] == *neg) ok = false;  // retry whole example on duplicate
            if (ok) negatives[k] = *neg;
          }
          if (!ok) continue;

          const int correct_slot = static_cast<int>(rng.below(4));
          std::array<Vec, 4> cands;
          int neg_at = 0;
          for (int slot = 0; slot < 4; ++slot) {
            const int id = (slot == correct_slot) ? correct : negatives[neg_at++];
            cands[slot] = index.embeddings[id];
          }
          Example ex;
          ex.hidden = compose_choice(index.embeddings[anchor], cands);
          ex.soft_label = one_hot(kChoiceLabels, correct_slot);
          examples.push_back(std::move(ex));
          built = true;
        }
        if (!built) aborted = true;  // insufficient negatives: skip the example, and
                                     // with it the half-filled task
      }
      if (aborted) {
        warn_skip("multi-choice tasks", c);
        break;
      }
      MetaTask task;
      task.format = TaskFormat::mc;
      task.anchor_cluster = c;
      RngStream split_rng = rng.child(999);
      std::tie(task.support, task.query) =
          episode_split(examples, cfg.support_size, cfg.query_size, split_rng);
      tasks.push_back(std::move(task));
    }
  }
  return tasks;
}

std::vector<MetaTask> make_single_sentence_tasks(const ClusterModel& clusters,
                                                 const CorpusIndex& index,
                                                 const TaskGenConfig& cfg) {
  const int k = clusters.k();
  if (k < 4) throw std::invalid_argument("make_single_sentence_tasks: need at least 4 clusters");
  const int episode = cfg.support_size + cfg.query_size;
  const int per_cluster = (episode + 3) / 4;

  std::vector<int> eligible;
  for (int c = 0; c < k; ++c)
    if (static_cast<int>(index.cluster_members[c].size()) >= per_cluster) eligible.push_back(c);
  if (static_cast<int>(eligible.size()) < 4) {
    std::cerr << "warning: fewer than 4 clusters large enough for single-sentence tasks\n";
    return {};
  }

  const int n_tasks = std::max(1, k * cfg.tasks_per_cluster / 4);
  RngStream root = RngStream(cfg.seed).child(kTagSingle);
  std::vector<MetaTask> tasks;
  tasks.reserve(n_tasks);

  for (int t = 0; t < n_tasks; ++t) {
    RngStream rng = root.child(static_cast<std::uint64_t>(t));
    // 4 distinct eligible clusters via partial Fisher-Yates.
    std::vector<int> order = eligible;
    for (int i = 0; i < 4; ++i) {
      const int j = i + static_cast<int>(rng.below(order.size() - i));
      std::swap(order[i], order[j]);
    }
    std::array<int, 4> chosen{order[0], order[1], order[2], order[3]};
    std::array<Vec, 4> centroid_slots;
    for (int slot = 0; slot < 4; ++slot) centroid_slots[slot] = clusters.centroids.row(chosen[slot]);

    std::vector<Example> examples;
    examples.reserve(episode);
    int remainder = episode - per_cluster * 4;  // <= 0
    for (int slot = 0; slot < 4; ++slot) {
      int quota = per_cluster;
      if (remainder < 0) {
        --quota;
        ++remainder;
      }
      // sample quota sentences from the slot's cluster without replacement
      std::vector<int> ids = index.cluster_members[chosen[slot]];
      for (int i = 0; i < quota; ++i) {
        const int j = i + static_cast<int>(rng.below(ids.size() - i));
        std::swap(ids[i], ids[j]);
        Example ex;
        ex.hidden = compose_choice(index.embeddings[ids[i]], centroid_slots);
        ex.soft_label = one_hot(kChoiceLabels, slot);
        examples.push_back(std::move(ex));
      }
    }
    MetaTask task;
    task.format = TaskFormat::ss;
    task.anchor_cluster = chosen[0];
    RngStream split_rng = rng.child(999);
    std::tie(task.support, task.query) =
        episode_split(examples, cfg.support_size, cfg.query_size, split_rng);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace supmer
