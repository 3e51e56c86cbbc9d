#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace supmer {

inline constexpr int kMaxSeqLen = 512;

struct Sentence {
  std::vector<int> tokens;  // ids in [0, vocab_size)
  int doc_id = 0;
  int pos = 0;  // index within document
};

struct Corpus {
  std::vector<std::vector<Sentence>> documents;
  int vocab_size = 0;

  int sentence_count() const;
  /// (doc, pos) pairs in document order; the flat sentence indexing used by
  /// clustering and task generation.
  std::vector<std::pair<int, int>> flat_refs() const;
  const Sentence& sentence(const std::pair<int, int>& ref) const {
    return documents[ref.first][ref.second];
  }
  /// Throws if any structural invariant is broken.
  void validate() const;
};

struct GenConfig {
  int topics = 8;
  int docs = 240;
  int min_doc_sentences = 8;
  int max_doc_sentences = 20;
  int min_tokens = 10;
  int max_tokens = 20;
  int vocab_size = 512;
  double topic_concentration = 0.08;  // Dirichlet concentration per topic
  std::uint64_t seed = 0;
};

/// Topic-structured synthetic corpus: every document draws all its sentences
/// from one latent topic's token distribution. Pure function of (cfg, seed).
Corpus generate_synthetic(const GenConfig& cfg);

/// One sentence per line, blank line separates documents. Words that are pure
/// decimal numerals map to (value mod V); anything else is FNV-1a hashed into
/// [0, V). Numerals make save/load round-trip exactly.
Corpus load_corpus(const std::string& path, int vocab_size = 512);
void save_corpus(const Corpus& corpus, const std::string& path);

/// Document-granularity split: val gets round(fraction * docs) documents,
/// clamped so both sides are non-empty. Seeded shuffle selects the val set;
/// original document order is preserved within each side.
std::pair<Corpus, Corpus> split_validation(const Corpus& corpus, double fraction,
                                           std::uint64_t seed);

}  // namespace supmer
