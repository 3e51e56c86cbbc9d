#include "supmer/promptmodel.hpp"

#include <cmath>
#include <stdexcept>

#include "supmer/rng.hpp"

namespace supmer {
namespace {

Vec prompt_mean(const PromptState& prompt) {
  Vec p(prompt.dim(), 0.0);
  for (int t = 0; t < prompt.tokens(); ++t)
    for (int j = 0; j < prompt.dim(); ++j) p[j] += prompt.theta(t, j);
  const double inv = 1.0 / prompt.tokens();
  for (double& v : p) v *= inv;
  return p;
}

/// d(cross-entropy)/d(logits) for a soft label: p * sum(y) - y.
Vec ce_logit_grad(const Vec& probs, const Vec& label) {
  double ysum = 0.0;
  for (double y : label) ysum += y;
  Vec g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] * ysum - label[i];
  return g;
}

}  // namespace

Vec softmax(const Vec& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

PromptState PromptState::gaussian_init(int tokens, int dim, double stddev, std::uint64_t seed) {
  if (tokens < 1 || dim < 1) throw std::invalid_argument("PromptState: shape must be positive");
  PromptState s;
  s.theta = Mat(tokens, dim);
  RngStream rng = RngStream(seed).child(21);
  fill_gaussian(s.theta, rng, stddev);
  return s;
}

Scorer::Scorer(const ScorerConfig& cfg) : cfg_(cfg) {
  if (cfg.prompt_dim < 1 || cfg.embed_dim < 1 || cfg.hidden_width < 1)
    throw std::invalid_argument("Scorer: dimensions must be positive");
  const int sp_in = cfg.prompt_dim + 3 * cfg.embed_dim;
  const int ch_in = cfg.prompt_dim + 2 * cfg.embed_dim;
  w1_ = Mat(cfg.hidden_width, sp_in);
  b1_ = Vec(cfg.hidden_width, 0.0);
  w2_ = Mat(kPairLabels, cfg.hidden_width);
  b2_ = Vec(kPairLabels, 0.0);
  v1_ = Mat(cfg.hidden_width, ch_in);
  c1_ = Vec(cfg.hidden_width, 0.0);
  v2_ = Vec(cfg.hidden_width, 0.0);

  if (!(cfg.init_gain > 0.0)) throw std::invalid_argument("Scorer: init_gain must be positive");
  RngStream root(cfg.seed);
  RngStream r0 = root.child(0), r1 = root.child(1), r2 = root.child(2), r3 = root.child(3);
  RngStream r4 = root.child(4), r5 = root.child(5), r6 = root.child(6), r7 = root.child(7);
  fill_gaussian(w1_, r0, cfg.init_gain / std::sqrt(static_cast<double>(sp_in)));
  fill_gaussian(b1_, r1, cfg.init_gain / std::sqrt(static_cast<double>(sp_in)));
  fill_gaussian(w2_, r2, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width)));
  fill_gaussian(b2_, r3, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width)));
  fill_gaussian(v1_, r4, cfg.init_gain / std::sqrt(static_cast<double>(ch_in)));
  fill_gaussian(c1_, r5, cfg.init_gain / std::sqrt(static_cast<double>(ch_in)));
  fill_gaussian(v2_, r6, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width)));
  c2_ = r7.gaussian() / std::sqrt(static_cast<double>(cfg.hidden_width));
}

void Scorer::check_prompt(const PromptState& prompt) const {
  if (prompt.tokens() < 1 || prompt.dim() != cfg_.prompt_dim)
    throw std::invalid_argument("Scorer: prompt shape mismatch");
}

Vec Scorer::logits(const PromptState& prompt, const Hidden& hidden) const {
  check_prompt(prompt);
  const Vec p = prompt_mean(prompt);
  const int dh = cfg_.embed_dim;
  if (hidden.format == HiddenFormat::sp) {
    if (static_cast<int>(hidden.values.size()) != 3 * dh)
      throw std::invalid_argument("Scorer: sp hidden dimension mismatch");
    Vec x;
    x.reserve(p.size() + hidden.values.size());
    x.insert(x.end(), p.begin(), p.end());
    x.insert(x.end(), hidden.values.begin(), hidden.values.end());
    Vec a = matvec(w1_, x);
    for (int i = 0; i < cfg_.hidden_width; ++i) a[i] = std::tanh(a[i] + b1_[i]);
    Vec out = matvec(w2_, a);
    for (int i = 0; i < kPairLabels; ++i) out[i] += b2_[i];
    return out;
  }
  if (static_cast<int>(hidden.values.size()) != 5 * dh)
    throw std::invalid_argument("Scorer: mc/ss hidden dimension mismatch");
  Vec out(kChoiceLabels, 0.0);
  Vec x(p.size() + 2 * dh);
  std::copy(p.begin(), p.end(), x.begin());
  std::copy(hidden.values.begin(), hidden.values.begin() + dh, x.begin() + p.size());
  for (int cand = 0; cand < kChoiceLabels; ++cand) {
    std::copy(hidden.values.begin() + (1 + cand) * dh, hidden.values.begin() + (2 + cand) * dh,
              x.begin() + p.size() + dh);
    Vec a = matvec(v1_, x);
    double s = c2_;
    for (int i = 0; i < cfg_.hidden_width; ++i) s += v2_[i] * std::tanh(a[i] + c1_[i]);
    out[cand] = s;
  }
  return out;
}

double Scorer::loss(const PromptState& prompt, std::span<const Example> episode) const {
  if (episode.empty()) throw std::invalid_argument("Scorer::loss: empty episode");
  double total = 0.0;
  for (const Example& ex : episode) {
    const Vec l = logits(prompt, ex.hidden);
    if (l.size() != ex.soft_label.size())
      throw std::invalid_argument("Scorer::loss: label dimension mismatch");
    // log-softmax evaluated directly for stability
    double mx = l[0];
    for (double v : l) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : l) z += std::exp(v - mx);
    const double logz = std::log(z) + mx;
    for (std::size_t c = 0; c < l.size(); ++c) total -= ex.soft_label[c] * (l[c] - logz);
  }
  return total / static_cast<double>(episode.size());
}

Mat Scorer::grad_prompt(const PromptState& prompt, std::span<const Example> episode) const {
  if (episode.empty()) throw std::invalid_argument("Scorer::grad_prompt: empty episode");
  check_prompt(prompt);
  const Vec p = prompt_mean(prompt);
  const int dh = cfg_.embed_dim;
  const int dp = cfg_.prompt_dim;
  Vec dp_mean(dp, 0.0);  // dL/d(p-bar)

  for (const Example& ex : episode) {
    if (ex.hidden.format == HiddenFormat::sp) {
      Vec x;
      x.reserve(p.size() + ex.hidden.values.size());
      x.insert(x.end(), p.begin(), p.end());
      x.insert(x.end(), ex.hidden.values.begin(), ex.hidden.values.end());
      Vec t = matvec(w1_, x);
      for (int i = 0; i < cfg_.hidden_width; ++i) t[i] = std::tanh(t[i] + b1_[i]);
      Vec l = matvec(w2_, t);
      for (int i = 0; i < kPairLabels; ++i) l[i] += b2_[i];

      const Vec dlogits = ce_logit_grad(softmax(l), ex.soft_label);
      Vec dt = matvec_tr(w2_, dlogits);
      for (int i = 0; i < cfg_.hidden_width; ++i) dt[i] *= 1.0 - t[i] * t[i];
      // only the first dp entries of dL/dx are needed
      for (int i = 0; i < cfg_.hidden_width; ++i) {
        const double di = dt[i];
        const double* row = w1_.data.data() + static_cast<std::size_t>(i) * w1_.cols;
        for (int j = 0; j < dp; ++j) dp_mean[j] += di * row[j];
      }
    } else {
      Vec x(p.size() + 2 * dh);
      std::copy(p.begin(), p.end(), x.begin());
      std::copy(ex.hidden.values.begin(), ex.hidden.values.begin() + dh, x.begin() + p.size());
      Vec l(kChoiceLabels, 0.0);
      std::vector<Vec> tanhs(kChoiceLabels);
      for (int cand = 0; cand < kChoiceLabels; ++cand) {
        std::copy(ex.hidden.values.begin() + (1 + cand) * dh,
                  ex.hidden.values.begin() + (2 + cand) * dh, x.begin() + p.size() + dh);
        Vec a = matvec(v1_, x);
        double s = c2_;
        for (int i = 0; i < cfg_.hidden_width; ++i) {
          a[i] = std::tanh(a[i] + c1_[i]);
          s += v2_[i] * a[i];
        }
        tanhs[cand] = std::move(a);
        l[cand] = s;
      }
      const Vec dlogits = ce_logit_grad(softmax(l), ex.soft_label);
      for (int cand = 0; cand < kChoiceLabels; ++cand) {
        const double dl = dlogits[cand];
        if (dl == 0.0) continue;
        const Vec& t = tanhs[cand];
        for (int i = 0; i < cfg_.hidden_width; ++i) {
          const double di = dl * v2_[i] * (1.0 - t[i] * t[i]);
          const double* row = v1_.data.data() + static_cast<std::size_t>(i) * v1_.cols;
          for (int j = 0; j < dp; ++j) dp_mean[j] += di * row[j];
        }
      }
    }
  }

  // mean over the episode, then (1/T) per prompt token row
  const double scale = 1.0 / (static_cast<double>(episode.size()) * prompt.tokens());
  Mat grad(prompt.tokens(), dp);
  for (int t = 0; t < prompt.tokens(); ++t)
    for (int j = 0; j < dp; ++j) grad(t, j) = dp_mean[j] * scale;
  return grad;
}

}  // namespace supmer
