#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "supmer/promptmodel.hpp"
#include "supmer/rng.hpp"

using namespace supmer;

namespace {

Hidden random_hidden(HiddenFormat format, int dh, RngStream& rng) {
  Hidden h;
  h.format = format;
  h.values.resize((format == HiddenFormat::sp ? 3 : 5) * dh);
  for (double& v : h.values) v = rng.gaussian();
  return h;
}

Vec random_simplex(int dim, RngStream& rng) {
  Vec y(dim);
  double total = 0.0;
  for (double& v : y) {
    v = rng.gamma(1.0);
    total += v;
  }
  for (double& v : y) v /= total;
  return y;
}

std::vector<Example> random_episode(HiddenFormat format, int dh, int n, RngStream& rng) {
  std::vector<Example> eps(n);
  for (Example& ex : eps) {
    ex.hidden = random_hidden(format, dh, rng);
    ex.soft_label = random_simplex(format == HiddenFormat::sp ? kPairLabels : kChoiceLabels, rng);
  }
  return eps;
}

}  // namespace

TEST_CASE("logits at theta=0, hidden=0 match W2 tanh(b1) + b2") {
  ScorerConfig cfg;
  cfg.prompt_dim = 6;
  cfg.embed_dim = 5;
  cfg.hidden_width = 16;
  const Scorer scorer(cfg);
  PromptState theta;
  theta.theta = Mat(3, cfg.prompt_dim);
  Hidden h;
  h.format = HiddenFormat::sp;
  h.values = Vec(3 * cfg.embed_dim, 0.0);

  const Vec got = scorer.logits(theta, h);
  for (int c = 0; c < kPairLabels; ++c) {
    double acc = scorer.pair_b2()[c];
    for (int i = 0; i < cfg.hidden_width; ++i)
      acc += scorer.pair_w2()(c, i) * std::tanh(scorer.pair_b1()[i]);
    CHECK(got[c] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("choice head: swapping candidates swaps logits") {
  ScorerConfig cfg;
  cfg.prompt_dim = 6;
  cfg.embed_dim = 5;
  const Scorer scorer(cfg);
  RngStream rng(3);
  PromptState theta;
  theta.theta = Mat(4, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 1.0);

  Hidden h = random_hidden(HiddenFormat::mc_ss, cfg.embed_dim, rng);
  const Vec base = scorer.logits(theta, h);

  Hidden swapped = h;
  for (int i = 0; i < cfg.embed_dim; ++i)
    std::swap(swapped.values[(1 + 1) * cfg.embed_dim + i],
              swapped.values[(1 + 2) * cfg.embed_dim + i]);
  const Vec after = scorer.logits(theta, swapped);
  CHECK(after[1] == doctest::Approx(base[2]).epsilon(1e-12));
  CHECK(after[2] == doctest::Approx(base[1]).epsilon(1e-12));
  CHECK(after[0] == doctest::Approx(base[0]).epsilon(1e-12));
  CHECK(after[3] == doctest::Approx(base[3]).epsilon(1e-12));
}

TEST_CASE("duplicating prompt token rows leaves logits unchanged") {
  ScorerConfig cfg;
  cfg.prompt_dim = 6;
  cfg.embed_dim = 5;
  const Scorer scorer(cfg);
  RngStream rng(7);
  PromptState theta;
  theta.theta = Mat(3, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 0.8);

  PromptState doubled;
  doubled.theta = Mat(6, cfg.prompt_dim);
  for (int t = 0; t < 6; ++t)
    for (int j = 0; j < cfg.prompt_dim; ++j) doubled.theta(t, j) = theta.theta(t % 3, j);

  const Hidden h = random_hidden(HiddenFormat::sp, cfg.embed_dim, rng);
  const Vec a = scorer.logits(theta, h);
  const Vec b = scorer.logits(doubled, h);
  for (int c = 0; c < kPairLabels; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-12));
}

TEST_CASE("loss: uniform logits give ln C; label=softmax gives the entropy") {
  ScorerConfig cfg;
  cfg.prompt_dim = 4;
  cfg.embed_dim = 3;
  const Scorer scorer(cfg);
  RngStream rng(11);
  PromptState theta;
  theta.theta = Mat(2, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 1.0);

  // uniform softmax: equal logits arise from a zero-output head; here we
  // check the identity directly on the computed probabilities instead.
  Example ex;
  ex.hidden = random_hidden(HiddenFormat::sp, cfg.embed_dim, rng);
  const Vec probs = softmax(scorer.logits(theta, ex.hidden));

  // label = softmax output -> loss = entropy of that distribution
  ex.soft_label = probs;
  double entropy = 0.0;
  for (double p : probs) entropy -= p * std::log(p);
  CHECK(scorer.loss(theta, std::span<const Example>(&ex, 1)) ==
        doctest::Approx(entropy).epsilon(1e-12));

  CHECK_THROWS_AS(scorer.loss(theta, std::span<const Example>{}), std::invalid_argument);
}

TEST_CASE("loss matches a high-precision independent recomputation") {
  ScorerConfig cfg;
  cfg.prompt_dim = 5;
  cfg.embed_dim = 4;
  cfg.hidden_width = 8;
  const Scorer scorer(cfg);
  RngStream rng(13);
  PromptState theta;
  theta.theta = Mat(3, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 0.7);
  const auto episode = random_episode(HiddenFormat::sp, cfg.embed_dim, 5, rng);

  long double total = 0.0L;
  for (const Example& ex : episode) {
    const Vec l = scorer.logits(theta, ex.hidden);
    long double z = 0.0L;
    long double mx = l[0];
    for (double v : l) mx = std::max<long double>(mx, v);
    for (double v : l) z += std::exp(static_cast<long double>(v) - mx);
    const long double logz = std::log(z) + mx;
    for (std::size_t c = 0; c < l.size(); ++c)
      total -= static_cast<long double>(ex.soft_label[c]) * (static_cast<long double>(l[c]) - logz);
  }
  total /= episode.size();
  CHECK(scorer.loss(theta, episode) == doctest::Approx(static_cast<double>(total)).epsilon(1e-13));
}

TEST_CASE("grad_prompt matches central finite differences on both formats") {
  for (const HiddenFormat format : {HiddenFormat::sp, HiddenFormat::mc_ss}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ScorerConfig cfg;
      cfg.prompt_dim = 5;
      cfg.embed_dim = 4;
      cfg.hidden_width = 8;
      cfg.seed = 50 + seed;
      const Scorer scorer(cfg);
      RngStream rng(seed);
      PromptState theta;
      theta.theta = Mat(3, cfg.prompt_dim);
      fill_gaussian(theta.theta, rng, 0.6);
      const auto episode = random_episode(format, cfg.embed_dim, 4, rng);

      const Mat analytic = scorer.grad_prompt(theta, episode);
      const auto fd = oracles::finite_difference(
          [&]() { return scorer.loss(theta, episode); }, theta.theta.data);
      CHECK(oracles::relative_error(analytic.data, fd) < 1e-6);
    }
  }
}

TEST_CASE("loss is linear in the soft label: mixed labels mix gradients") {
  ScorerConfig cfg;
  cfg.prompt_dim = 5;
  cfg.embed_dim = 4;
  const Scorer scorer(cfg);
  RngStream rng(17);
  PromptState theta;
  theta.theta = Mat(2, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 0.5);

  Example a, b;
  a.hidden = random_hidden(HiddenFormat::sp, cfg.embed_dim, rng);
  b.hidden = a.hidden;
  a.soft_label = {1.0, 0.0, 0.0};
  b.soft_label = {0.0, 1.0, 0.0};
  const double lam = 0.3;
  Example mixed;
  mixed.hidden = a.hidden;
  mixed.soft_label = {1.0 - lam, lam, 0.0};

  const Mat ga = scorer.grad_prompt(theta, std::span<const Example>(&a, 1));
  const Mat gb = scorer.grad_prompt(theta, std::span<const Example>(&b, 1));
  const Mat gm = scorer.grad_prompt(theta, std::span<const Example>(&mixed, 1));
  for (std::size_t i = 0; i < gm.data.size(); ++i)
    CHECK(gm.data[i] ==
          doctest::Approx((1.0 - lam) * ga.data[i] + lam * gb.data[i]).epsilon(1e-10));
}

TEST_CASE("gradient vanishes at a saturated one-example optimum") {
  ScorerConfig cfg;
  cfg.prompt_dim = 4;
  cfg.embed_dim = 3;
  const Scorer scorer(cfg);
  RngStream rng(19);
  PromptState theta;
  theta.theta = Mat(2, cfg.prompt_dim);
  fill_gaussian(theta.theta, rng, 0.5);

  Example ex;
  ex.hidden = random_hidden(HiddenFormat::sp, cfg.embed_dim, rng);
  // soft label equal to the model's own output is a stationary point of the
  // cross-entropy in logit space (p - y = 0), hence zero prompt gradient
  ex.soft_label = softmax(scorer.logits(theta, ex.hidden));
  const Mat g = scorer.grad_prompt(theta, std::span<const Example>(&ex, 1));
  CHECK(frobenius_norm(g) < 1e-6);
}
