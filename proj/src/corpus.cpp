#include "supmer/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "supmer/rng.hpp"

namespace supmer {
namespace {

constexpr std::uint64_t kTagTopics = 1;
constexpr std::uint64_t kTagDocs = 2;
constexpr std::uint64_t kTagSplit = 3;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

bool is_all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

int tokenize_word(const std::string& word, int vocab_size) {
  if (is_all_digits(word)) {
    // Numeric words map to their value mod V, so a saved corpus reloads to
    // the same token ids.
    std::uint64_t v = 0;
    for (char c : word) v = (v * 10 + static_cast<std::uint64_t>(c - '0')) % static_cast<std::uint64_t>(vocab_size);
    return static_cast<int>(v);
  }
  return static_cast<int>(fnv1a64(word) % static_cast<std::uint64_t>(vocab_size));
}

}  // namespace

int Corpus::sentence_count() const {
  int n = 0;
  for (const auto& doc : documents) n += static_cast<int>(doc.size());
  return n;
}

std::vector<std::pair<int, int>> Corpus::flat_refs() const {
  std::vector<std::pair<int, int>> refs;
  refs.reserve(static_cast<std::size_t>(sentence_count()));
  for (int d = 0; d < static_cast<int>(documents.size()); ++d)
    for (int p = 0; p < static_cast<int>(documents[d].size()); ++p) refs.emplace_back(d, p);
  return refs;
}

void Corpus::validate() const {
  if (vocab_size < 1) throw std::invalid_argument("corpus: vocab_size must be positive");
  if (documents.empty()) throw std::invalid_argument("corpus: empty corpus");
  for (int d = 0; d < static_cast<int>(documents.size()); ++d) {
    if (documents[d].empty()) throw std::invalid_argument("corpus: empty document");
    for (int p = 0; p < static_cast<int>(documents[d].size()); ++p) {
      const Sentence& s = documents[d][p];
      if (s.doc_id != d || s.pos != p)
        throw std::invalid_argument("corpus: sentence (doc_id, pos) inconsistent with container");
      if (s.tokens.empty() || static_cast<int>(s.tokens.size()) > kMaxSeqLen)
        throw std::invalid_argument("corpus: sentence length out of range");
      for (int t : s.tokens)
        if (t < 0 || t >= vocab_size) throw std::invalid_argument("corpus: token id out of range");
    }
  }
}

Corpus generate_synthetic(const GenConfig& cfg) {
  if (cfg.topics < 2) throw std::invalid_argument("generate_synthetic: need at least 2 topics");
  if (cfg.docs < 1) throw std::invalid_argument("generate_synthetic: empty corpus");
  if (cfg.min_doc_sentences < 1 || cfg.min_doc_sentences > cfg.max_doc_sentences)
    throw std::invalid_argument("generate_synthetic: invalid sentences-per-document range");
  if (cfg.min_tokens < 1 || cfg.min_tokens > cfg.max_tokens || cfg.max_tokens > kMaxSeqLen)
    throw std::invalid_argument("generate_synthetic: invalid sentence-length range");
  if (cfg.vocab_size < 2) throw std::invalid_argument("generate_synthetic: vocab too small");
  if (!(cfg.topic_concentration > 0.0))
    throw std::invalid_argument("generate_synthetic: concentration must be positive");

  RngStream root(cfg.seed);

  // Per-topic token distribution: normalized gamma draws = Dirichlet sample.
  // Stored as cumulative sums for categorical sampling.
  std::vector<std::vector<double>> topic_cdf(cfg.topics);
  for (int k = 0; k < cfg.topics; ++k) {
    RngStream rng = root.child(kTagTopics).child(static_cast<std::uint64_t>(k));
    std::vector<double> w(cfg.vocab_size);
    double total = 0.0;
    for (int v = 0; v < cfg.vocab_size; ++v) {
      w[v] = rng.gamma(cfg.topic_concentration);
      total += w[v];
    }
    std::vector<double> cdf(cfg.vocab_size);
    double acc = 0.0;
    for (int v = 0; v < cfg.vocab_size; ++v) {
      acc += w[v] / total;
      cdf[v] = acc;
    }
    cdf.back() = 1.0;
    topic_cdf[k] = std::move(cdf);
  }

  Corpus corpus;
  corpus.vocab_size = cfg.vocab_size;
  corpus.documents.resize(cfg.docs);
  for (int d = 0; d < cfg.docs; ++d) {
    RngStream rng = root.child(kTagDocs).child(static_cast<std::uint64_t>(d));
    const int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.topics)));
    const auto& cdf = topic_cdf[topic];
    const int n_sent = cfg.min_doc_sentences +
                       static_cast<int>(rng.below(
                           static_cast<std::uint64_t>(cfg.max_doc_sentences - cfg.min_doc_sentences + 1)));
    auto& doc = corpus.documents[d];
    doc.resize(n_sent);
    for (int p = 0; p < n_sent; ++p) {
      Sentence& s = doc[p];
      s.doc_id = d;
      s.pos = p;
      const int len = cfg.min_tokens +
                      static_cast<int>(rng.below(
                          static_cast<std::uint64_t>(cfg.max_tokens - cfg.min_tokens + 1)));
      s.tokens.resize(len);
      for (int t = 0; t < len; ++t) {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        s.tokens[t] = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), cfg.vocab_size - 1));
      }
    }
  }
  corpus.validate();
  return corpus;
}

Corpus load_corpus(const std::string& path, int vocab_size) {
  if (vocab_size < 1) throw std::invalid_argument("load_corpus: vocab_size must be positive");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);

  Corpus corpus;
  corpus.vocab_size = vocab_size;
  std::vector<Sentence> current;
  std::string line;
  auto flush_doc = [&]() {
    if (current.empty()) return;
    const int d = static_cast<int>(corpus.documents.size());
    for (int p = 0; p < static_cast<int>(current.size()); ++p) {
      current[p].doc_id = d;
      current[p].pos = p;
    }
    corpus.documents.push_back(std::move(current));
    current.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    Sentence s;
    std::string w;
    while (words >> w) s.tokens.push_back(tokenize_word(w, vocab_size));
    if (s.tokens.empty()) {
      flush_doc();  // blank line = document boundary
      continue;
    }
    if (static_cast<int>(s.tokens.size()) > kMaxSeqLen)
      throw std::runtime_error("load_corpus: sentence exceeds max length");
    current.push_back(std::move(s));
  }
  flush_doc();
  if (corpus.documents.empty()) throw std::runtime_error("load_corpus: empty corpus file");
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  corpus.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d > 0) out << "\n";
    for (const Sentence& s : corpus.documents[d]) {
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        if (t > 0) out << ' ';
        out << s.tokens[t];
      }
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("save_corpus: write failed for " + path);
}

std::pair<Corpus, Corpus> split_validation(const Corpus& corpus, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_validation: fraction must be in (0, 1)");
  const int n = static_cast<int>(corpus.documents.size());
  if (n < 2) throw std::invalid_argument("split_validation: need at least 2 documents");

  int n_val = static_cast<int>(std::llround(fraction * n));
  n_val = std::clamp(n_val, 1, n - 1);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RngStream rng = RngStream(seed).child(kTagSplit);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> is_val(n, false);
  for (int i = 0; i < n_val; ++i) is_val[order[i]] = true;

  auto build = [&](bool pick_val) {
    Corpus out;
    out.vocab_size = corpus.vocab_size;
    for (int d = 0; d < n; ++d) {
      if (is_val[d] != pick_val) continue;
      std::vector<Sentence> doc = corpus.documents[d];
      const int new_id = static_cast<int>(out.documents.size());
      for (auto& s : doc) s.doc_id = new_id;
      out.documents.push_back(std::move(doc));
    }
    return out;
  };
  return {build(false), build(true)};
}

}  // namespace supmer
