#include "supmer/metagrad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace supmer {

RegularizerState RegularizerState::identity_init(int prompt_dim, int gate_input_dim) {
  if (prompt_dim < 1 || gate_input_dim < 1)
    throw std::invalid_argument("RegularizerState: dimensions must be positive");
  RegularizerState s;
  s.A = Mat::identity(prompt_dim);
  s.c = Vec(prompt_dim, 0.0);
  s.W = Mat(prompt_dim, gate_input_dim);
  s.b = Vec(prompt_dim, 0.0);
  return s;
}

void RegularizerState::validate() const {
  if (A.rows != A.cols || A.rows < 1) throw std::invalid_argument("RegularizerState: A must be square");
  if (static_cast<int>(c.size()) != A.rows || static_cast<int>(b.size()) != A.rows ||
      W.rows != A.rows || W.cols < 1)
    throw std::invalid_argument("RegularizerState: inconsistent shapes");
  if (!all_finite(A) || !all_finite(W) || !all_finite(c) || !all_finite(b))
    throw std::invalid_argument("RegularizerState: non-finite entries");
}

Vec gate(const RegularizerState& phi, const Vec& h_bar) {
  if (static_cast<int>(h_bar.size()) != phi.W.cols)
    throw std::invalid_argument("gate: input dimension mismatch");
  // strictly inside (0,1): the sigmoid saturates to exactly 0 or 1 in double
  // precision around |x| ~ 37, so pin to the nearest representable interior
  constexpr double kEdge = 0x1.0p-53;
  Vec z = matvec(phi.W, h_bar);
  for (int j = 0; j < static_cast<int>(z.size()); ++j) {
    const double s = 1.0 / (1.0 + std::exp(-(z[j] + phi.b[j])));
    z[j] = std::clamp(s, kEdge, 1.0 - kEdge);
  }
  return z;
}

Mat transform(const RegularizerState& phi, const Vec& z, const Mat& g) {
  const int dp = phi.prompt_dim();
  if (g.cols != dp || static_cast<int>(z.size()) != dp)
    throw std::invalid_argument("transform: shape mismatch");
  Mat out(g.rows, dp);
  for (int t = 0; t < g.rows; ++t) {
    const Vec h = matvec(phi.A, g.row(t));
    for (int j = 0; j < dp; ++j)
      out(t, j) = z[j] * (h[j] + phi.c[j]) + (1.0 - z[j]) * g(t, j);
  }
  return out;
}

double reg_loss(const Vec& z, double b_k) {
  if (z.empty()) throw std::invalid_argument("reg_loss: empty gate");
  double s = 0.0;
  for (double v : z) {
    const double d = v - b_k;
    s += d * d;
  }
  return s / static_cast<double>(z.size());
}

PhiGrads backward_phi(const RegularizerState& phi, const Vec& z, const Mat& g, const Vec& h_bar,
                      const Mat& upstream, double b_k, double reg_coeff) {
  const int dp = phi.prompt_dim();
  if (!g.same_shape(upstream) || g.cols != dp || static_cast<int>(z.size()) != dp ||
      static_cast<int>(h_bar.size()) != phi.W.cols)
    throw std::invalid_argument("backward_phi: shape mismatch");

  PhiGrads grads;
  grads.A = Mat(dp, dp);
  grads.c = Vec(dp, 0.0);
  grads.W = Mat(phi.W.rows, phi.W.cols);
  grads.b = Vec(dp, 0.0);

  // dz[j] accumulates the sensitivity of the objective to z_j.
  Vec dz(dp, 0.0);
  for (int t = 0; t < g.rows; ++t) {
    const Vec gt = g.row(t);
    const Vec h = matvec(phi.A, gt);
    for (int j = 0; j < dp; ++j) {
      const double u = upstream(t, j);
      const double uz = u * z[j];
      grads.c[j] += uz;
      for (int k = 0; k < dp; ++k) grads.A(j, k) += uz * gt[k];
      dz[j] += u * (h[j] + phi.c[j] - gt[j]);
    }
  }
  for (int j = 0; j < dp; ++j)
    dz[j] += reg_coeff * (2.0 / dp) * (z[j] - b_k);

  for (int j = 0; j < dp; ++j) {
    const double through_sigmoid = dz[j] * z[j] * (1.0 - z[j]);
    grads.b[j] = through_sigmoid;
    for (int k = 0; k < phi.W.cols; ++k) grads.W(j, k) = through_sigmoid * h_bar[k];
  }
  return grads;
}

}  // namespace supmer
