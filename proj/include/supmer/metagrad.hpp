#pragma once

#include "supmer/linalg.hpp"

namespace supmer {

/// Parameters of the meta-gradient regularization function: an affine map
/// h(g_t) = A g_t + c on each prompt-token gradient row, blended with the raw
/// gradient by a sigmoid gate z computed from input representations.
struct RegularizerState {
  Mat A;  // d_p x d_p
  Vec c;  // d_p
  Mat W;  // d_p x d_h
  Vec b;  // d_p

  int prompt_dim() const { return A.rows; }
  int gate_input_dim() const { return W.cols; }

  /// A = I, c = 0, W = 0, b = 0: the regularizer is the identity map on
  /// gradients (any z), and z = 0.5 everywhere. Step 0 of meta-training then
  /// coincides with plain first-order MAML.
  static RegularizerState identity_init(int prompt_dim, int gate_input_dim);

  void validate() const;
};

/// Exact gradients of the outer objective with respect to phi.
struct PhiGrads {
  Mat A;
  Vec c;
  Mat W;
  Vec b;
};

/// z = sigmoid(W h_bar + b); every entry strictly inside (0, 1).
Vec gate(const RegularizerState& phi, const Vec& h_bar);

/// psi_phi(g): per token row t and coordinate j,
///   out[t][j] = z[j] * (A g_t + c)[j] + (1 - z[j]) * g[t][j].
Mat transform(const RegularizerState& phi, const Vec& z, const Mat& g);

/// mean_j (z_j - b_k)^2; the coordinate mean keeps the coefficient
/// dimension-independent.
double reg_loss(const Vec& z, double b_k);

/// Closed-form gradients of  upstream . psi_phi(g)  +  reg_coeff * reg_loss(z, b_k)
/// with respect to (A, c, W, b), where `upstream` is the sensitivity of the
/// outer loss to psi's output (-alpha_1 * grad of the query loss at theta').
/// Exact: phi enters the outer loss only through psi and the gate.
PhiGrads backward_phi(const RegularizerState& phi, const Vec& z, const Mat& g, const Vec& h_bar,
                      const Mat& upstream, double b_k, double reg_coeff);

}  // namespace supmer
