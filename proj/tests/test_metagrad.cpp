#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "supmer/metagrad.hpp"
#include "supmer/rng.hpp"

using namespace supmer;

namespace {

RegularizerState random_phi(int dp, int dh, RngStream& rng) {
  RegularizerState phi = RegularizerState::identity_init(dp, dh);
  fill_gaussian(phi.A, rng, 0.5);
  fill_gaussian(phi.c, rng, 0.5);
  fill_gaussian(phi.W, rng, 0.5);
  fill_gaussian(phi.b, rng, 0.5);
  return phi;
}

}  // namespace

TEST_CASE("gate: sigma(0)=0.5, saturation, direct-arithmetic agreement") {
  const int dp = 4, dh = 3;
  RegularizerState phi = RegularizerState::identity_init(dp, dh);
  const Vec h_bar{0.3, -0.7, 1.1};

  const Vec z0 = gate(phi, h_bar);
  for (double z : z0) CHECK(z == doctest::Approx(0.5).epsilon(1e-15));

  phi.b[2] = 40.0;  // saturates that coordinate
  const Vec zs = gate(phi, h_bar);
  CHECK(zs[2] == doctest::Approx(1.0).epsilon(1e-12));

  RngStream rng(23);
  phi = random_phi(dp, dh, rng);
  const Vec z = gate(phi, h_bar);
  for (int j = 0; j < dp; ++j) {
    double acc = phi.b[j];
    for (int k = 0; k < dh; ++k) acc += phi.W(j, k) * h_bar[k];
    CHECK(z[j] == doctest::Approx(1.0 / (1.0 + std::exp(-acc))).epsilon(1e-14));
    CHECK(z[j] > 0.0);
    CHECK(z[j] < 1.0);
  }
  CHECK_THROWS_AS(gate(phi, Vec{1.0}), std::invalid_argument);
}

TEST_CASE("transform: identity collapse and frozen arithmetic") {
  const int dp = 2;
  RegularizerState phi = RegularizerState::identity_init(dp, 3);
  Mat g(2, dp);
  g(0, 0) = 1.0;
  g(0, 1) = -2.0;
  g(1, 0) = 0.4;
  g(1, 1) = 3.0;

  // A = I, c = 0: transform is the identity for any z
  const Vec any_z{0.77, 0.12};
  const Mat t = transform(phi, any_z, g);
  CHECK(t.data == g.data);

  // z -> 0 limit: output = g even for a non-identity map
  RngStream rng(29);
  RegularizerState phi2 = random_phi(dp, 3, rng);
  const Mat t0 = transform(phi2, Vec{0.0, 0.0}, g);
  CHECK(t0.data == g.data);

  // z = 0.5, A = 2I, c = 0 on row (1, -2) -> (1.5, -3)
  RegularizerState phi3 = RegularizerState::identity_init(dp, 3);
  phi3.A(0, 0) = 2.0;
  phi3.A(1, 1) = 2.0;
  const Mat t3 = transform(phi3, Vec{0.5, 0.5}, g);
  CHECK(t3(0, 0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(t3(0, 1) == doctest::Approx(-3.0).epsilon(1e-15));
}

TEST_CASE("transform is affine in g") {
  RngStream rng(31);
  const int dp = 5, tokens = 3;
  const RegularizerState phi = random_phi(dp, 4, rng);
  Vec z(dp);
  for (double& v : z) v = rng.uniform01();
  Mat g1(tokens, dp), g2(tokens, dp), zero(tokens, dp);
  fill_gaussian(g1, rng, 1.0);
  fill_gaussian(g2, rng, 1.0);
  Mat sum = g1;
  axpy(1.0, g2, sum);

  const Mat t0 = transform(phi, z, zero);
  const Mat t1 = transform(phi, z, g1);
  const Mat t2 = transform(phi, z, g2);
  const Mat ts = transform(phi, z, sum);
  for (std::size_t i = 0; i < ts.data.size(); ++i)
    CHECK(ts.data[i] - t0.data[i] ==
          doctest::Approx((t1.data[i] - t0.data[i]) + (t2.data[i] - t0.data[i])).epsilon(1e-12));
}

TEST_CASE("reg_loss: zero at target, frozen value, dimension-independent") {
  CHECK(reg_loss(Vec{0.4, 0.4, 0.4}, 0.4) == doctest::Approx(0.0));
  CHECK(reg_loss(Vec{0.9}, 0.4) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(reg_loss(Vec{0.9, 0.9, 0.9, 0.9}, 0.4) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward_phi: trivial cases") {
  const int dp = 3, dh = 2, tokens = 2;
  RngStream rng(37);
  Mat g(tokens, dp);
  fill_gaussian(g, rng, 1.0);
  const Vec h_bar{0.2, -0.5};

  // A = I, c = 0: psi(g) = g, so the z-sensitivity is the reg term alone
  RegularizerState phi = RegularizerState::identity_init(dp, dh);
  const Vec z = gate(phi, h_bar);
  Mat upstream(tokens, dp);
  fill_gaussian(upstream, rng, 1.0);
  const double b_k = 0.3, reg_coeff = 1.7;
  const PhiGrads pg = backward_phi(phi, z, g, h_bar, upstream, b_k, reg_coeff);
  for (int j = 0; j < dp; ++j) {
    const double expected_dz = reg_coeff * (2.0 / dp) * (z[j] - b_k);
    CHECK(pg.b[j] == doctest::Approx(expected_dz * z[j] * (1.0 - z[j])).epsilon(1e-12));
  }

  // zero upstream and zero reg coefficient: all gradients vanish
  const PhiGrads zero = backward_phi(phi, z, g, h_bar, Mat(tokens, dp), b_k, 0.0);
  CHECK(frobenius_norm(zero.A) == 0.0);
  CHECK(frobenius_norm(zero.W) == 0.0);
  CHECK(norm2(zero.c) == 0.0);
  CHECK(norm2(zero.b) == 0.0);
}

TEST_CASE("backward_phi matches finite differences of the full objective") {
  // objective: sum_t upstream[t] . psi_phi(g)[t] + reg_coeff * reg_loss(z, b_k),
  // with z recomputed from (W, b) inside; this is the exact phi path of the
  // outer loss, so agreement must be at numerical precision.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(100 + seed);
    const int dp = 4, dh = 3, tokens = 2;
    RegularizerState phi = random_phi(dp, dh, rng);
    Mat g(tokens, dp), upstream(tokens, dp);
    fill_gaussian(g, rng, 1.0);
    fill_gaussian(upstream, rng, 1.0);
    Vec h_bar(dh);
    fill_gaussian(h_bar, rng, 1.0);
    const double b_k = rng.uniform01();
    const double reg_coeff = 0.5 + rng.uniform01();

    auto objective = [&]() {
      const Vec z = gate(phi, h_bar);
      const Mat out = transform(phi, z, g);
      double total = 0.0;
      for (std::size_t i = 0; i < out.data.size(); ++i) total += upstream.data[i] * out.data[i];
      return total + reg_coeff * reg_loss(z, b_k);
    };

    const Vec z = gate(phi, h_bar);
    const PhiGrads analytic = backward_phi(phi, z, g, h_bar, upstream, b_k, reg_coeff);

    const auto fd_a = oracles::finite_difference(objective, phi.A.data);
    const auto fd_c = oracles::finite_difference(objective, phi.c);
    const auto fd_w = oracles::finite_difference(objective, phi.W.data);
    const auto fd_b = oracles::finite_difference(objective, phi.b);
    CHECK(oracles::relative_error(analytic.A.data, fd_a) < 1e-6);
    CHECK(oracles::relative_error(analytic.c, fd_c) < 1e-6);
    CHECK(oracles::relative_error(analytic.W.data, fd_w) < 1e-6);
    CHECK(oracles::relative_error(analytic.b, fd_b) < 1e-6);
  }
}
