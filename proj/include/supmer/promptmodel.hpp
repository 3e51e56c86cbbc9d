#pragma once

#include <cstdint>
#include <span>

#include "supmer/encoder.hpp"
#include "supmer/linalg.hpp"
#include "supmer/taskgen.hpp"

namespace supmer {

/// The soft prompt matrix: the only downstream-tunable parameters.
struct PromptState {
  Mat theta;  // T x d_p

  int tokens() const { return theta.rows; }
  int dim() const { return theta.cols; }

  static PromptState gaussian_init(int tokens, int dim, double stddev, std::uint64_t seed);
};

struct ScorerConfig {
  int prompt_dim = 32;   // d_p
  int embed_dim = 32;    // d_h; hidden dims are 3*d_h (sp) and 5*d_h (mc/ss)
  int hidden_width = 64;
  // First-layer init gain: weights are N(0, gain^2/fan_in). With unit-scale
  // inputs a plain 1/fan_in variance leaves the tanh layer in its linear
  // range, where the prompt can only shift logits by a constant; the gain
  // moves pre-activations to O(1) so prompt tuning has functional leverage.
  double init_gain = 8.0;
  std::uint64_t seed = 2;
};

/// Frozen prompt-conditioned scorer. The prompt enters as the mean of its
/// token rows, concatenated with the (format-shaped) input features:
///   sp:    logits = W2 tanh(W1 [p; h] + b1) + b2                 (3 classes)
///   mc/ss: per candidate i, logit_i = v2 . tanh(V1 [p; e_q; e_i] + c1) + c2
/// Loss is soft-label cross-entropy, and grad_prompt is its exact closed-form
/// gradient; each prompt token row receives (1/T) of the pooled gradient.
class Scorer {
 public:
  explicit Scorer(const ScorerConfig& cfg);

  const ScorerConfig& config() const { return cfg_; }

  Vec logits(const PromptState& prompt, const Hidden& hidden) const;
  double loss(const PromptState& prompt, std::span<const Example> episode) const;
  Mat grad_prompt(const PromptState& prompt, std::span<const Example> episode) const;

  // Frozen parameters, exposed for direct-arithmetic checks.
  const Mat& pair_w1() const { return w1_; }
  const Vec& pair_b1() const { return b1_; }
  const Mat& pair_w2() const { return w2_; }
  const Vec& pair_b2() const { return b2_; }
  const Mat& choice_w1() const { return v1_; }
  const Vec& choice_b1() const { return c1_; }
  const Vec& choice_w2() const { return v2_; }
  double choice_b2() const { return c2_; }

 private:
  void check_prompt(const PromptState& prompt) const;

  ScorerConfig cfg_;
  Mat w1_;  // hidden_width x (d_p + 3 d_h)
  Vec b1_;
  Mat w2_;  // 3 x hidden_width
  Vec b2_;
  Mat v1_;  // hidden_width x (d_p + 2 d_h)
  Vec c1_;
  Vec v2_;  // hidden_width
  double c2_ = 0.0;
};

/// softmax with the usual max shift.
Vec softmax(const Vec& logits);

}  // namespace supmer
