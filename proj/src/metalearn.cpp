#include "supmer/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace supmer {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kTagBatch = 31;
constexpr std::uint64_t kTagAugment = 32;

Vec mean_projected_support(const Encoder& encoder, std::span<const Example> support) {
  Vec h_bar(encoder.embed_dim(), 0.0);
  for (const Example& ex : support) axpy(1.0, encoder.project_common(ex.hidden), h_bar);
  const double inv = 1.0 / static_cast<double>(support.size());
  for (double& v : h_bar) v *= inv;
  return h_bar;
}

int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;  // strict: ties keep the lowest index
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(inner_lr >= 0.0)) throw std::invalid_argument("config: inner_lr must be non-negative");
  if (!(outer_lr > 0.0) || !(phi_lr > 0.0))
    throw std::invalid_argument("config: learning rates must be positive");
  if (!(m > 1.0)) throw std::invalid_argument("config: m must be greater than 1");
  if (!(reg_coeff >= 0.0)) throw std::invalid_argument("config: reg_coeff must be non-negative");
  if (!(alpha_beta > 0.0)) throw std::invalid_argument("config: alpha_beta must be positive");
  if (!(b_min > 0.0 && b_min < 1.0)) throw std::invalid_argument("config: b_min must be in (0, 1)");
  if (tasks_per_batch < 1 || support_size < 1 || query_size < 1)
    throw std::invalid_argument("config: sizes must be at least 1");
  if (max_steps < 0) throw std::invalid_argument("config: max_steps must be non-negative");
  if (validate_every < 1) throw std::invalid_argument("config: validate_every must be positive");
  if (!(phi_adam_beta1 >= 0.0 && phi_adam_beta1 < 1.0) ||
      !(phi_adam_beta2 >= 0.0 && phi_adam_beta2 < 1.0))
    throw std::invalid_argument("config: Adam betas must be in [0, 1)");
  if (prompt_tokens < 1 || prompt_dim < 1)
    throw std::invalid_argument("config: prompt shape must be positive");
  if (!(theta_init_std >= 0.0)) throw std::invalid_argument("config: theta_init_std negative");
}

std::string TrainConfig::to_key_values() const {
  std::ostringstream out;
  out.precision(17);
  out << "inner_lr=" << inner_lr << "\n";
  out << "outer_lr=" << outer_lr << "\n";
  out << "phi_lr=" << phi_lr << "\n";
  out << "m=" << m << "\n";
  out << "reg_coeff=" << reg_coeff << "\n";
  out << "alpha_beta=" << alpha_beta << "\n";
  out << "b_min=" << b_min << "\n";
  out << "tasks_per_batch=" << tasks_per_batch << "\n";
  out << "support_size=" << support_size << "\n";
  out << "query_size=" << query_size << "\n";
  out << "max_steps=" << max_steps << "\n";
  out << "validate_every=" << validate_every << "\n";
  out << "seed=" << seed << "\n";
  out << "curriculum=" << (curriculum ? 1 : 0) << "\n";
  out << "augmentation=" << (augmentation ? 1 : 0) << "\n";
  out << "regularizer=" << (regularizer ? 1 : 0) << "\n";
  out << "cosine_source=" << (cosine_source == CosineSource::regulated ? "regulated" : "raw")
      << "\n";
  out << "beta_swap=" << (beta_swap ? 1 : 0) << "\n";
  out << "phi_optimizer=" << (phi_optimizer == PhiOptimizer::adam ? "adam" : "sgd") << "\n";
  out << "phi_adam_beta1=" << phi_adam_beta1 << "\n";
  out << "phi_adam_beta2=" << phi_adam_beta2 << "\n";
  out << "prompt_tokens=" << prompt_tokens << "\n";
  out << "prompt_dim=" << prompt_dim << "\n";
  out << "theta_init_std=" << theta_init_std << "\n";
  return out.str();
}

TrainConfig TrainConfig::from_key_values(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(first, eq - first);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    auto as_double = [&]() { return std::stod(value); };
    auto as_int = [&]() { return std::stoi(value); };
    auto as_bool = [&]() {
      if (value == "1" || value == "true" || value == "on") return true;
      if (value == "0" || value == "false" || value == "off") return false;
      throw std::invalid_argument("config: bad boolean for " + key);
    };
    if (key == "inner_lr") cfg.inner_lr = as_double();
    else if (key == "outer_lr") cfg.outer_lr = as_double();
    else if (key == "phi_lr") cfg.phi_lr = as_double();
    else if (key == "m") cfg.m = as_double();
    else if (key == "reg_coeff") cfg.reg_coeff = as_double();
    else if (key == "alpha_beta") cfg.alpha_beta = as_double();
    else if (key == "b_min") cfg.b_min = as_double();
    else if (key == "tasks_per_batch") cfg.tasks_per_batch = as_int();
    else if (key == "support_size") cfg.support_size = as_int();
    else if (key == "query_size") cfg.query_size = as_int();
    else if (key == "max_steps") cfg.max_steps = as_int();
    else if (key == "validate_every") cfg.validate_every = as_int();
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "curriculum") cfg.curriculum = as_bool();
    else if (key == "augmentation") cfg.augmentation = as_bool();
    else if (key == "regularizer") cfg.regularizer = as_bool();
    else if (key == "beta_swap") cfg.beta_swap = as_bool();
    else if (key == "phi_adam_beta1") cfg.phi_adam_beta1 = as_double();
    else if (key == "phi_adam_beta2") cfg.phi_adam_beta2 = as_double();
    else if (key == "phi_optimizer") {
      if (value == "adam") cfg.phi_optimizer = PhiOptimizer::adam;
      else if (value == "sgd") cfg.phi_optimizer = PhiOptimizer::sgd;
      else throw std::invalid_argument("config: phi_optimizer must be adam or sgd");
    }
    else if (key == "prompt_tokens") cfg.prompt_tokens = as_int();
    else if (key == "prompt_dim") cfg.prompt_dim = as_int();
    else if (key == "theta_init_std") cfg.theta_init_std = as_double();
    else if (key == "cosine_source") {
      if (value == "regulated") cfg.cosine_source = CosineSource::regulated;
      else if (value == "raw") cfg.cosine_source = CosineSource::raw;
      else throw std::invalid_argument("config: cosine_source must be regulated or raw");
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string TrainConfig::digest() const {
  const std::string canon = to_key_values();
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

InnerResult inner_adapt(const Scorer& scorer, const Encoder& encoder, const PromptState& theta,
                        const RegularizerState& phi, std::span<const Example> support,
                        double inner_lr, bool regularizer_on) {
  if (support.empty()) throw std::invalid_argument("inner_adapt: empty support set");
  InnerResult res;
  res.raw_grad = scorer.grad_prompt(theta, support);
  res.h_bar = mean_projected_support(encoder, support);
  Mat regulated;
  if (regularizer_on) {
    res.z = gate(phi, res.h_bar);
    regulated = transform(phi, res.z, res.raw_grad);
  } else {
    res.z = Vec(phi.prompt_dim(), 0.5);
    regulated = res.raw_grad;
  }
  res.theta_prime.theta = theta.theta;
  axpy(-inner_lr, regulated, res.theta_prime.theta);
  return res;
}

double task_cosine(const Mat& g_query, const Mat& g_support_regulated) {
  return cosine_flat(g_query, g_support_regulated, 1e-12);
}

double effective_b(const TrainConfig& cfg, double s) {
  if (!cfg.curriculum) return 1.0;  // vanilla augmentation: Beta(alpha, alpha)
  return std::clamp(curriculum_b(s, cfg.m), cfg.b_min, 1.0);
}

StepMetrics outer_step(MetaState& state, const std::vector<MetaTask>& batch, const Scorer& scorer,
                       const Encoder& encoder, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("outer_step: empty batch");
  const double b_k = effective_b(cfg, state.s);

  Mat theta_grad(state.theta.tokens(), state.theta.dim());
  PhiGrads phi_grad;
  phi_grad.A = Mat(state.phi.prompt_dim(), state.phi.prompt_dim());
  phi_grad.c = Vec(state.phi.prompt_dim(), 0.0);
  phi_grad.W = Mat(state.phi.W.rows, state.phi.W.cols);
  phi_grad.b = Vec(state.phi.prompt_dim(), 0.0);

  double sum_s = 0.0, sum_loss_q = 0.0, sum_reg = 0.0, sum_mean_z = 0.0;

  for (const MetaTask& task : batch) {
    const InnerResult inner = inner_adapt(scorer, encoder, state.theta, state.phi, task.support,
                                          cfg.inner_lr, cfg.regularizer);
    const Mat g_query = scorer.grad_prompt(state.theta, task.query);
    // regulated support gradient, reconstructed from the inner step
    Mat g_reg = inner.raw_grad;
    if (cfg.regularizer) g_reg = transform(state.phi, inner.z, inner.raw_grad);
    sum_s += task_cosine(g_query, cfg.cosine_source == CosineSource::raw ? inner.raw_grad : g_reg);

    sum_loss_q += scorer.loss(inner.theta_prime, task.query);
    const Mat g_query_adapted = scorer.grad_prompt(inner.theta_prime, task.query);
    axpy(1.0, g_query_adapted, theta_grad);  // first-order: gradient taken at theta'

    if (cfg.regularizer) {
      Mat upstream = g_query_adapted;
      for (double& v : upstream.data) v *= -cfg.inner_lr;
      const PhiGrads pg = backward_phi(state.phi, inner.z, inner.raw_grad, inner.h_bar, upstream,
                                       b_k, cfg.reg_coeff);
      axpy(1.0, pg.A, phi_grad.A);
      axpy(1.0, pg.c, phi_grad.c);
      axpy(1.0, pg.W, phi_grad.W);
      axpy(1.0, pg.b, phi_grad.b);
      sum_reg += reg_loss(inner.z, b_k);
      double mz = 0.0;
      for (double v : inner.z) mz += v;
      sum_mean_z += mz / static_cast<double>(inner.z.size());
    }
  }

  axpy(-cfg.outer_lr, theta_grad, state.theta.theta);
  if (cfg.regularizer) {
    if (cfg.phi_optimizer == PhiOptimizer::sgd) {
      axpy(-cfg.phi_lr, phi_grad.A, state.phi.A);
      axpy(-cfg.phi_lr, phi_grad.c, state.phi.c);
      axpy(-cfg.phi_lr, phi_grad.W, state.phi.W);
      axpy(-cfg.phi_lr, phi_grad.b, state.phi.b);
    } else {
      state.opt_steps += 1;
      auto adam = [&](AdamMoments& opt, std::vector<double>& x, const std::vector<double>& g) {
        opt.ensure(x.size());
        const double b1 = cfg.phi_adam_beta1, b2 = cfg.phi_adam_beta2, eps = 1e-8;
        const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.opt_steps));
        const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.opt_steps));
        for (std::size_t i = 0; i < x.size(); ++i) {
          opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g[i];
          opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * g[i] * g[i];
          x[i] -= cfg.phi_lr * (opt.m[i] / corr1) / (std::sqrt(opt.v[i] / corr2) + eps);
        }
      };
      adam(state.opt_A, state.phi.A.data, phi_grad.A.data);
      adam(state.opt_c, state.phi.c, phi_grad.c);
      adam(state.opt_W, state.phi.W.data, phi_grad.W.data);
      adam(state.opt_b, state.phi.b, phi_grad.b);
    }
  }

  const double n = static_cast<double>(batch.size());
  state.s = sum_s / n;
  state.step += 1;

  StepMetrics m;
  m.step = state.step;
  m.loss_q = sum_loss_q / n;
  m.loss_reg = cfg.regularizer ? sum_reg / n : 0.0;
  m.s = state.s;
  m.b = b_k;
  if (cfg.regularizer) m.mean_z = sum_mean_z / n;
  return m;
}

ValidationResult validate_tasks(const MetaState& state, const std::vector<MetaTask>& tasks,
                                const Scorer& scorer, const Encoder& encoder,
                                const TrainConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("validate_tasks: no validation tasks");
  double loss_sum = 0.0;
  double acc_sum = 0.0;
  for (const MetaTask& task : tasks) {
    const InnerResult inner = inner_adapt(scorer, encoder, state.theta, state.phi, task.support,
                                          cfg.inner_lr, cfg.regularizer);
    loss_sum += scorer.loss(inner.theta_prime, task.query);
    int correct = 0;
    for (const Example& ex : task.query) {
      const Vec l = scorer.logits(inner.theta_prime, ex.hidden);
      if (argmax(l) == argmax(ex.soft_label)) ++correct;
    }
    acc_sum += static_cast<double>(correct) / static_cast<double>(task.query.size());
  }
  return {loss_sum / tasks.size(), acc_sum / tasks.size()};
}

std::string metrics_to_json_line(const StepMetrics& m) {
  ordered_json j;
  j["step"] = m.step;
  j["loss_q"] = m.loss_q;
  j["loss_reg"] = m.loss_reg;
  j["s"] = m.s;
  j["b"] = m.b;
  j["mean_z"] = m.mean_z ? ordered_json(*m.mean_z) : ordered_json(nullptr);
  j["val_loss"] = m.val_loss ? ordered_json(*m.val_loss) : ordered_json(nullptr);
  j["val_acc"] = m.val_acc ? ordered_json(*m.val_acc) : ordered_json(nullptr);
  return j.dump();
}

MetaTrainResult meta_train(const std::vector<MetaTask>& train_pool,
                           const std::vector<MetaTask>& val_pool, const Scorer& scorer,
                           const Encoder& encoder, const TrainConfig& cfg,
                           std::ostream* metrics_out) {
  cfg.validate();
  if (train_pool.empty()) throw std::invalid_argument("meta_train: empty task pool");

  MetaState state;
  state.theta = PromptState::gaussian_init(cfg.prompt_tokens, cfg.prompt_dim, cfg.theta_init_std,
                                           cfg.seed);
  state.phi = RegularizerState::identity_init(cfg.prompt_dim, encoder.embed_dim());
  state.s = -1.0;
  state.step = 0;
  state.rng_root = cfg.seed;

  RngStream root(cfg.seed);

  MetaTrainResult result;
  result.theta_star = state.theta;
  result.phi_star = state.phi;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.best_step = 0;
  bool validated = false;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    RngStream batch_rng = root.child(kTagBatch).child(static_cast<std::uint64_t>(step));
    std::vector<MetaTask> batch;
    batch.reserve(cfg.tasks_per_batch);
    for (int i = 0; i < cfg.tasks_per_batch; ++i)
      batch.push_back(train_pool[batch_rng.below(train_pool.size())]);

    if (cfg.augmentation) {
      CurriculumState cur;
      cur.s = state.s;
      cur.m = cfg.m;
      cur.alpha_beta = cfg.alpha_beta;
      cur.b_min = cfg.b_min;
      cur.beta_swap = cfg.beta_swap;
      // With the curriculum off, b is pinned to 1 (vanilla Beta(alpha, alpha)).
      if (!cfg.curriculum) cur.s = 1.0;
      RngStream aug_rng = root.child(kTagAugment).child(static_cast<std::uint64_t>(step));
      batch = augment_batch(batch, train_pool, cur, aug_rng);
    }

    StepMetrics m = outer_step(state, batch, scorer, encoder, cfg);

    if (!val_pool.empty() && step % cfg.validate_every == 0) {
      const ValidationResult v = validate_tasks(state, val_pool, scorer, encoder, cfg);
      m.val_loss = v.loss;
      m.val_acc = v.accuracy;
      validated = true;
      if (v.loss < result.best_val_loss) {
        result.best_val_loss = v.loss;
        result.best_step = state.step;
        result.theta_star = state.theta;
        result.phi_star = state.phi;
      }
    }

    if (metrics_out) (*metrics_out) << metrics_to_json_line(m) << "\n";
    result.metrics.push_back(std::move(m));
  }

  if (!validated) {
    result.theta_star = state.theta;
    result.phi_star = state.phi;
    result.best_step = state.step;
    result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace supmer
