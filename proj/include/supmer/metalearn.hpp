#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "supmer/augment.hpp"
#include "supmer/metagrad.hpp"
#include "supmer/promptmodel.hpp"

namespace supmer {

enum class CosineSource { regulated, raw };
enum class PhiOptimizer { adam, sgd };

struct TrainConfig {
  double inner_lr = 0.1;   // alpha_1
  double outer_lr = 0.1;   // beta_1, soft prompt
  double phi_lr = 3e-4;    // beta_2, regularizer parameters (desk value; full scale 1e-4)
  double m = 2.0;          // curriculum curve parameter
  double reg_coeff = 1.0;  // coefficient of the gate-target loss
  double alpha_beta = 0.5;
  double b_min = 1e-3;
  int tasks_per_batch = 4;
  int support_size = 32;
  int query_size = 32;
  int max_steps = 2000;      // desk-scale default; the full-scale setting is 100000
  int validate_every = 100;  // desk-scale default; the full-scale setting is 2000
  std::uint64_t seed = 0;
  bool curriculum = true;
  bool augmentation = true;
  bool regularizer = true;
  CosineSource cosine_source = CosineSource::regulated;
  bool beta_swap = false;
  // theta keeps the plain first-order update so the MAML-reduction
  // equivalence holds exactly; phi defaults to Adam.
  PhiOptimizer phi_optimizer = PhiOptimizer::adam;
  double phi_adam_beta1 = 0.99;  // heavy first-moment smoothing: desk-scale
                                 // batch gradients are noise-dominated
  double phi_adam_beta2 = 0.999;
  int prompt_tokens = 8;  // desk-scale stand-in for the 100-token prompt
  int prompt_dim = 32;
  double theta_init_std = 0.5;

  void validate() const;
  /// FNV-1a hex digest of the canonical key=value rendering.
  std::string digest() const;
  /// Canonical key=value lines (also the config-file format).
  std::string to_key_values() const;
  static TrainConfig from_key_values(const std::string& text);
};

/// First/second-moment accumulators for one phi parameter block.
struct AdamMoments {
  Vec m, v;
  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }
};

struct MetaState {
  PromptState theta;
  RegularizerState phi;
  double s = -1.0;
  std::int64_t step = 0;
  std::uint64_t rng_root = 0;
  // phi optimizer state; owned by the training loop, not checkpointed
  AdamMoments opt_A, opt_c, opt_W, opt_b;
  std::int64_t opt_steps = 0;
};

struct StepMetrics {
  std::int64_t step = 0;
  double loss_q = 0.0;
  double loss_reg = 0.0;
  double s = 0.0;
  double b = 0.0;
  std::optional<double> mean_z;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

struct InnerResult {
  PromptState theta_prime;
  Mat raw_grad;  // g0: support gradient at theta
  Vec z;         // gate (0.5 everywhere when the regularizer is off)
  Vec h_bar;     // gate input: mean projected support representation
};

/// One regulated inner step: theta' = theta - alpha_1 * psi_phi(grad_support).
InnerResult inner_adapt(const Scorer& scorer, const Encoder& encoder, const PromptState& theta,
                        const RegularizerState& phi, std::span<const Example> support,
                        double inner_lr, bool regularizer_on);

/// Cosine of the flattened gradients; 0 if either norm is below 1e-12.
double task_cosine(const Mat& g_query, const Mat& g_support_regulated);

/// b used for both Beta sampling and the gate-target loss at alignment s.
double effective_b(const TrainConfig& cfg, double s);

/// One outer step over an (already augmented) batch. First-order theta
/// update; exact phi update.
StepMetrics outer_step(MetaState& state, const std::vector<MetaTask>& batch, const Scorer& scorer,
                       const Encoder& encoder, const TrainConfig& cfg);

struct ValidationResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean adapted query loss / accuracy over held-out tasks.
ValidationResult validate_tasks(const MetaState& state, const std::vector<MetaTask>& tasks,
                                const Scorer& scorer, const Encoder& encoder,
                                const TrainConfig& cfg);

struct MetaTrainResult {
  PromptState theta_star;      // parameters with the lowest validation loss
  RegularizerState phi_star;
  MetaState final_state;
  double best_val_loss = 0.0;
  std::int64_t best_step = 0;
  std::vector<StepMetrics> metrics;
};

/// Full meta-training: sample batch -> augment -> outer step, validating
/// every validate_every steps. Metrics are streamed to `metrics_out` (JSON
/// Lines) when given.
MetaTrainResult meta_train(const std::vector<MetaTask>& train_pool,
                           const std::vector<MetaTask>& val_pool, const Scorer& scorer,
                           const Encoder& encoder, const TrainConfig& cfg,
                           std::ostream* metrics_out = nullptr);

std::string metrics_to_json_line(const StepMetrics& m);

}  // namespace supmer
