#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

#include "supmer/corpus.hpp"
#include "supmer/linalg.hpp"

namespace supmer {

enum class TaskFormat { sp, mc, ss };

/// The scorer distinguishes only two input shapes: sentence-pair features and
/// query-plus-four-candidates features (shared by mc and ss).
enum class HiddenFormat { sp, mc_ss };

inline HiddenFormat hidden_format_of(TaskFormat f) {
  return f == TaskFormat::sp ? HiddenFormat::sp : HiddenFormat::mc_ss;
}

struct Hidden {
  HiddenFormat format = HiddenFormat::sp;
  Vec values;
};

/// [e1; e2; e1 (.) e2], dim 3n.
Hidden compose_pair(const Vec& e1, const Vec& e2);

/// [e_q; e_1; e_2; e_3; e_4], dim 5n. Exactly 4 candidates.
Hidden compose_choice(const Vec& query, std::span<const Vec> candidates);

struct EncoderConfig {
  int vocab_size = 512;
  int token_dim = 32;  // d
  int embed_dim = 32;  // d_h
  std::uint64_t seed = 1;
};

/// Frozen seeded sentence encoder. embed() mean-pools token embeddings,
/// applies a fixed tanh projection and L2-normalizes, so all sentence
/// embeddings live on the unit sphere. project_common() maps either Hidden
/// shape back to embed_dim through a frozen per-format linear map; it is the
/// gate input used by the meta-gradient regularizer.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  int embed_dim() const { return cfg_.embed_dim; }

  Vec embed(const Sentence& s) const;
  Vec project_common(const Hidden& h) const;

  const Mat& token_table() const { return token_table_; }
  const Mat& projection() const { return proj_; }
  const Mat& gate_projection(HiddenFormat f) const {
    return f == HiddenFormat::sp ? gate_proj_sp_ : gate_proj_ch_;
  }

 private:
  EncoderConfig cfg_;
  Mat token_table_;   // V x d
  Mat proj_;          // d_h x d
  Mat gate_proj_sp_;  // d_h x 3 d_h
  Mat gate_proj_ch_;  // d_h x 5 d_h
};

}  // namespace supmer
