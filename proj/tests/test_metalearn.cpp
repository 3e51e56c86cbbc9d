#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "supmer/metalearn.hpp"
#include "supmer/serialize.hpp"

using namespace supmer;

namespace {

struct SmallSetup {
  EncoderConfig enc_cfg;
  ScorerConfig sc_cfg;
  TrainConfig cfg;

  SmallSetup() {
    enc_cfg.embed_dim = 4;
    enc_cfg.token_dim = 4;
    sc_cfg.prompt_dim = 5;
    sc_cfg.embed_dim = 4;
    sc_cfg.hidden_width = 8;
    cfg.prompt_tokens = 3;
    cfg.prompt_dim = 5;
    cfg.support_size = 4;
    cfg.query_size = 4;
    cfg.tasks_per_batch = 2;
  }
};

}  // namespace

TEST_CASE("inner_adapt: alpha=0 is a no-op; identity phi is a plain MAML step") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  RngStream rng(3);
  const MetaTask task = fixtures::random_task(TaskFormat::sp, 4, 4, 4, rng);
  const PromptState theta = PromptState::gaussian_init(3, 5, 0.5, 7);
  const RegularizerState phi = RegularizerState::identity_init(5, 4);

  const InnerResult frozen = inner_adapt(scorer, encoder, theta, phi, task.support, 0.0, true);
  CHECK(frozen.theta_prime.theta.data == theta.theta.data);

  const double alpha = 0.1;
  const InnerResult stepped = inner_adapt(scorer, encoder, theta, phi, task.support, alpha, true);
  const Mat g = scorer.grad_prompt(theta, task.support);
  for (std::size_t i = 0; i < g.data.size(); ++i)
    CHECK(stepped.theta_prime.theta.data[i] ==
          doctest::Approx(theta.theta.data[i] - alpha * g.data[i]).epsilon(1e-14));
  for (double z : stepped.z) CHECK(z == 0.5);
}

TEST_CASE("inner_adapt frozen arithmetic: theta=1, g=0.5, alpha=0.1 -> 0.95") {
  // one-token, one-dim check of the update rule itself
  const PromptState theta{Mat(1, 1, 1.0)};
  const Mat g(1, 1, 0.5);
  PromptState out;
  out.theta = theta.theta;
  axpy(-0.1, g, out.theta);
  CHECK(out.theta(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("task_cosine: aligned, opposed, orthogonal, near-zero") {
  Mat a(1, 2), b(1, 2);
  a(0, 0) = 1.0;
  b(0, 0) = 2.0;
  CHECK(task_cosine(a, b) == doctest::Approx(1.0));
  b(0, 0) = -2.0;
  CHECK(task_cosine(a, b) == doctest::Approx(-1.0));
  b(0, 0) = 0.0;
  b(0, 1) = 1.0;
  CHECK(task_cosine(a, b) == doctest::Approx(0.0));
  CHECK(task_cosine(a, Mat(1, 2)) == 0.0);
}

TEST_CASE("outer_step with everything off equals the first-order MAML reference") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;
  cfg.regularizer = false;
  cfg.augmentation = false;
  cfg.curriculum = false;

  const auto pool = fixtures::random_pool(6, 4, cfg.support_size, cfg.query_size, 11);

  MetaState state;
  state.theta = PromptState::gaussian_init(cfg.prompt_tokens, cfg.prompt_dim, 0.5, 13);
  state.phi = RegularizerState::identity_init(cfg.prompt_dim, encoder.embed_dim());
  PromptState reference = state.theta;

  const oracles::FirstOrderMaml maml{cfg.inner_lr, cfg.outer_lr};
  RngStream rng(17);
  for (int step = 0; step < 10; ++step) {
    std::vector<MetaTask> batch;
    for (int i = 0; i < cfg.tasks_per_batch; ++i) batch.push_back(pool[rng.below(pool.size())]);
    outer_step(state, batch, scorer, encoder, cfg);
    maml.step(scorer, reference, batch);
    for (std::size_t i = 0; i < reference.theta.data.size(); ++i)
      CHECK(std::abs(state.theta.theta.data[i] - reference.theta.data[i]) < 1e-10);
  }
}

TEST_CASE("alpha=0: theta update is plain descent on the query loss; phi moves on the reg term only") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;
  cfg.inner_lr = 0.0;
  cfg.tasks_per_batch = 1;

  const auto pool = fixtures::random_pool(1, 4, cfg.support_size, cfg.query_size, 19);
  MetaState state;
  state.theta = PromptState::gaussian_init(cfg.prompt_tokens, cfg.prompt_dim, 0.5, 23);
  state.phi = RegularizerState::identity_init(cfg.prompt_dim, encoder.embed_dim());
  const PromptState theta0 = state.theta;
  const RegularizerState phi0 = state.phi;

  outer_step(state, pool, scorer, encoder, cfg);

  const Mat gq = scorer.grad_prompt(theta0, pool[0].query);
  for (std::size_t i = 0; i < gq.data.size(); ++i)
    CHECK(state.theta.theta.data[i] ==
          doctest::Approx(theta0.theta.data[i] - cfg.outer_lr * gq.data[i]).epsilon(1e-12));

  // with upstream = 0 the only phi gradient is the reg term, which lives in W/b
  CHECK(state.phi.A.data == phi0.A.data);
  CHECK(state.phi.c == phi0.c);
}

TEST_CASE("phi finite differences hold through the full outer step objective") {
  // F(phi) = sum_i [ L_q(theta - a1 psi_phi(g_i)) + reg_coeff * reg_loss(z_i, b_k) ]
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(200 + seed);
    std::vector<MetaTask> batch;
    for (int i = 0; i < 2; ++i)
      batch.push_back(fixtures::random_task(TaskFormat::sp, 4, 4, 4, rng));
    const PromptState theta = PromptState::gaussian_init(cfg.prompt_tokens, cfg.prompt_dim, 0.5,
                                                         300 + seed);
    RegularizerState phi = RegularizerState::identity_init(cfg.prompt_dim, encoder.embed_dim());
    fill_gaussian(phi.A, rng, 0.4);
    fill_gaussian(phi.c, rng, 0.4);
    fill_gaussian(phi.W, rng, 0.4);
    fill_gaussian(phi.b, rng, 0.4);
    const double b_k = 0.37;

    auto objective = [&]() {
      double total = 0.0;
      for (const MetaTask& task : batch) {
        const InnerResult inner =
            inner_adapt(scorer, encoder, theta, phi, task.support, cfg.inner_lr, true);
        total += scorer.loss(inner.theta_prime, task.query);
        total += cfg.reg_coeff * reg_loss(inner.z, b_k);
      }
      return total;
    };

    PhiGrads analytic;
    analytic.A = Mat(cfg.prompt_dim, cfg.prompt_dim);
    analytic.c = Vec(cfg.prompt_dim, 0.0);
    analytic.W = Mat(cfg.prompt_dim, encoder.embed_dim());
    analytic.b = Vec(cfg.prompt_dim, 0.0);
    for (const MetaTask& task : batch) {
      const InnerResult inner =
          inner_adapt(scorer, encoder, theta, phi, task.support, cfg.inner_lr, true);
      Mat upstream = scorer.grad_prompt(inner.theta_prime, task.query);
      for (double& v : upstream.data) v *= -cfg.inner_lr;
      const PhiGrads pg =
          backward_phi(phi, inner.z, inner.raw_grad, inner.h_bar, upstream, b_k, cfg.reg_coeff);
      axpy(1.0, pg.A, analytic.A);
      axpy(1.0, pg.c, analytic.c);
      axpy(1.0, pg.W, analytic.W);
      axpy(1.0, pg.b, analytic.b);
    }

    CHECK(oracles::relative_error(analytic.A.data,
                                  oracles::finite_difference(objective, phi.A.data)) < 1e-6);
    CHECK(oracles::relative_error(analytic.c, oracles::finite_difference(objective, phi.c)) <
          1e-6);
    CHECK(oracles::relative_error(analytic.W.data,
                                  oracles::finite_difference(objective, phi.W.data)) < 1e-6);
    CHECK(oracles::relative_error(analytic.b, oracles::finite_difference(objective, phi.b)) <
          1e-6);
  }
}

TEST_CASE("first-order theta gradient error shrinks roughly linearly in alpha") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);

  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(400 + seed);
    const MetaTask task = fixtures::random_task(TaskFormat::sp, 4, 4, 4, rng);
    PromptState theta = PromptState::gaussian_init(3, 5, 0.5, 500 + seed);
    RegularizerState phi = RegularizerState::identity_init(5, encoder.embed_dim());
    fill_gaussian(phi.A, rng, 0.3);
    fill_gaussian(phi.c, rng, 0.3);
    fill_gaussian(phi.W, rng, 0.3);
    fill_gaussian(phi.b, rng, 0.3);

    std::vector<double> errs;
    for (const double alpha : {0.1, 0.05, 0.025}) {
      auto outer_objective = [&]() {
        const InnerResult inner =
            inner_adapt(scorer, encoder, theta, phi, task.support, alpha, true);
        return scorer.loss(inner.theta_prime, task.query);
      };
      const auto exact = oracles::finite_difference(outer_objective, theta.theta.data);
      const InnerResult inner =
          inner_adapt(scorer, encoder, theta, phi, task.support, alpha, true);
      const Mat first_order = scorer.grad_prompt(inner.theta_prime, task.query);
      errs.push_back(oracles::relative_error(first_order.data, exact));
    }
    ratios.push_back(errs[1] / errs[0]);
    ratios.push_back(errs[2] / errs[1]);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median > 0.3);
  CHECK(median < 0.8);
}

TEST_CASE("meta_train: zero steps returns the initialization; metrics are per-step") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;
  cfg.max_steps = 0;
  const auto pool = fixtures::random_pool(4, 4, cfg.support_size, cfg.query_size, 29);

  const MetaTrainResult zero = meta_train(pool, {}, scorer, encoder, cfg);
  const PromptState init = PromptState::gaussian_init(cfg.prompt_tokens, cfg.prompt_dim,
                                                      cfg.theta_init_std, cfg.seed);
  CHECK(zero.theta_star.theta.data == init.theta.data);
  CHECK(zero.metrics.empty());

  cfg.max_steps = 7;
  cfg.validate_every = 3;
  const MetaTrainResult r = meta_train(pool, pool, scorer, encoder, cfg);
  REQUIRE(r.metrics.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(r.metrics[i].step == i + 1);
    CHECK(r.metrics[i].s >= -1.0);
    CHECK(r.metrics[i].s <= 1.0);
    const bool should_validate = (i + 1) % cfg.validate_every == 0;
    CHECK(r.metrics[i].val_loss.has_value() == should_validate);
  }
  CHECK(std::isfinite(r.best_val_loss));

  CHECK_THROWS_AS(meta_train({}, {}, scorer, encoder, cfg), std::invalid_argument);
}

TEST_CASE("meta_train is bit-deterministic for a fixed seed") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;
  cfg.max_steps = 5;
  const auto pool = fixtures::random_pool(5, 4, cfg.support_size, cfg.query_size, 31);

  std::ostringstream m1, m2;
  const MetaTrainResult a = meta_train(pool, pool, scorer, encoder, cfg, &m1);
  const MetaTrainResult b = meta_train(pool, pool, scorer, encoder, cfg, &m2);
  CHECK(a.final_state.theta.theta.data == b.final_state.theta.theta.data);
  CHECK(a.final_state.phi.A.data == b.final_state.phi.A.data);
  CHECK(a.final_state.s == b.final_state.s);
  CHECK(m1.str() == m2.str());
}

TEST_CASE("logged b equals the clamped curriculum value of the previous s") {
  const SmallSetup s;
  const Encoder encoder(s.enc_cfg);
  const Scorer scorer(s.sc_cfg);
  TrainConfig cfg = s.cfg;
  cfg.max_steps = 6;
  const auto pool = fixtures::random_pool(4, 4, cfg.support_size, cfg.query_size, 37);
  const MetaTrainResult r = meta_train(pool, {}, scorer, encoder, cfg);

  double prev_s = -1.0;
  for (const StepMetrics& m : r.metrics) {
    const double expect = std::clamp(curriculum_b(prev_s, cfg.m), cfg.b_min, 1.0);
    CHECK(m.b == doctest::Approx(expect).epsilon(1e-15));
    prev_s = m.s;
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const SmallSetup s;
  Checkpoint ckpt;
  ckpt.state.theta = PromptState::gaussian_init(3, 5, 0.5, 41);
  ckpt.state.phi = RegularizerState::identity_init(5, 4);
  RngStream rng(43);
  fill_gaussian(ckpt.state.phi.A, rng, 0.3);
  fill_gaussian(ckpt.state.phi.W, rng, 0.3);
  ckpt.state.s = -0.12345678901234567;
  ckpt.state.step = 99;
  ckpt.state.rng_root = 0xDEADBEEFCAFEF00Dull;
  ckpt.config_digest = TrainConfig{}.digest();
  ckpt.model.prompt_tokens = 3;
  ckpt.model.prompt_dim = 5;
  ckpt.model.embed_dim = 4;

  const std::string path =
      (std::filesystem::temp_directory_path() / "supmer_ckpt_rt.json").string();
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.state.theta.theta.data == ckpt.state.theta.theta.data);
  CHECK(loaded.state.phi.A.data == ckpt.state.phi.A.data);
  CHECK(loaded.state.phi.W.data == ckpt.state.phi.W.data);
  CHECK(loaded.state.s == ckpt.state.s);
  CHECK(loaded.state.step == ckpt.state.step);
  CHECK(loaded.state.rng_root == ckpt.state.rng_root);
  CHECK(loaded.config_digest == ckpt.config_digest);
  CHECK(loaded.model.prompt_dim == 5);
  std::remove(path.c_str());
}

TEST_CASE("train config round-trips through key=value text") {
  TrainConfig cfg;
  cfg.inner_lr = 0.05;
  cfg.max_steps = 123;
  cfg.cosine_source = CosineSource::raw;
  cfg.beta_swap = true;
  const TrainConfig back = TrainConfig::from_key_values(cfg.to_key_values());
  CHECK(back.inner_lr == cfg.inner_lr);
  CHECK(back.max_steps == cfg.max_steps);
  CHECK(back.cosine_source == CosineSource::raw);
  CHECK(back.beta_swap == true);
  CHECK(back.digest() == cfg.digest());
  CHECK_THROWS_AS(TrainConfig::from_key_values("nonsense_key=1\n"), std::invalid_argument);
}
