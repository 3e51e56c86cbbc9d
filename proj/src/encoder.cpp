#include "supmer/encoder.hpp"

#include <cmath>

#include "supmer/rng.hpp"

namespace supmer {

Hidden compose_pair(const Vec& e1, const Vec& e2) {
  if (e1.empty() || e1.size() != e2.size())
    throw std::invalid_argument("compose_pair: dimension mismatch");
  const std::size_t n = e1.size();
  Hidden h;
  h.format = HiddenFormat::sp;
  h.values.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    h.values[i] = e1[i];
    h.values[n + i] = e2[i];
    h.values[2 * n + i] = e1[i] * e2[i];
  }
  return h;
}

Hidden compose_choice(const Vec& query, std::span<const Vec> candidates) {
  if (candidates.size() != 4) throw std::invalid_argument("compose_choice: need exactly 4 candidates");
  const std::size_t n = query.size();
  if (n == 0) throw std::invalid_argument("compose_choice: empty query");
  for (const Vec& c : candidates)
    if (c.size() != n) throw std::invalid_argument("compose_choice: dimension mismatch");
  Hidden h;
  h.format = HiddenFormat::mc_ss;
  h.values.reserve(5 * n);
  h.values.insert(h.values.end(), query.begin(), query.end());
  for (const Vec& c : candidates) h.values.insert(h.values.end(), c.begin(), c.end());
  return h;
}

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size < 1 || cfg.token_dim < 1 || cfg.embed_dim < 1)
    throw std::invalid_argument("Encoder: dimensions must be positive");
  RngStream root(cfg.seed);

  token_table_ = Mat(cfg.vocab_size, cfg.token_dim);
  proj_ = Mat(cfg.embed_dim, cfg.token_dim);
  gate_proj_sp_ = Mat(cfg.embed_dim, 3 * cfg.embed_dim);
  gate_proj_ch_ = Mat(cfg.embed_dim, 5 * cfg.embed_dim);

  // N(0, 1/fan_in) with fan_in = input dimension of each map.
  RngStream r0 = root.child(0), r1 = root.child(1), r2 = root.child(2), r3 = root.child(3);
  fill_gaussian(token_table_, r0, 1.0 / std::sqrt(static_cast<double>(cfg.token_dim)));
  fill_gaussian(proj_, r1, 1.0 / std::sqrt(static_cast<double>(cfg.token_dim)));
  fill_gaussian(gate_proj_sp_, r2, 1.0 / std::sqrt(3.0 * cfg.embed_dim));
  fill_gaussian(gate_proj_ch_, r3, 1.0 / std::sqrt(5.0 * cfg.embed_dim));
}

Vec Encoder::embed(const Sentence& s) const {
  if (s.tokens.empty()) throw std::invalid_argument("embed: empty sentence");
  Vec mean(cfg_.token_dim, 0.0);
  for (int t : s.tokens) {
    if (t < 0 || t >= cfg_.vocab_size) throw std::invalid_argument("embed: token id out of range");
    const double* row = token_table_.data.data() + static_cast<std::size_t>(t) * cfg_.token_dim;
    for (int i = 0; i < cfg_.token_dim; ++i) mean[i] += row[i];
  }
  const double inv_n = 1.0 / static_cast<double>(s.tokens.size());
  for (double& v : mean) v *= inv_n;

  Vec out = matvec(proj_, mean);
  for (double& v : out) v = std::tanh(v);
  const double n = norm2(out);
  if (n == 0.0) throw std::runtime_error("embed: degenerate zero embedding");
  for (double& v : out) v /= n;
  return out;
}

Vec Encoder::project_common(const Hidden& h) const {
  const Mat& g = gate_projection(h.format);
  if (static_cast<int>(h.values.size()) != g.cols)
    throw std::invalid_argument("project_common: hidden dimension does not match format");
  return matvec(g, h.values);
}

}  // namespace supmer
