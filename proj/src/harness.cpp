#include "supmer/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "supmer/clustering.hpp"
#include "supmer/serialize.hpp"
#include "supmer/taskgen.hpp"

namespace supmer {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kTagVanillaInit = 41;
constexpr std::uint64_t kTagShiftTask = 42;

int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

TuneResult tune_loop(const Scorer& scorer, const Encoder& encoder, PromptState theta,
                     const RegularizerState* phi, const DownstreamTask& task,
                     const TuneOptions& opts) {
  if (task.train.empty()) throw std::invalid_argument("prompt_tune: empty train episode");
  if (opts.steps < 0 || opts.eval_every < 1)
    throw std::invalid_argument("prompt_tune: bad step options");

  TuneResult res;
  for (const DomainEpisode& ep : task.test) res.domains.push_back(ep.domain);
  res.curves.resize(task.test.size());

  Vec h_bar;
  Vec z;
  if (phi) {
    h_bar = Vec(encoder.embed_dim(), 0.0);
    for (const Example& ex : task.train) axpy(1.0, encoder.project_common(ex.hidden), h_bar);
    for (double& v : h_bar) v /= static_cast<double>(task.train.size());
    z = gate(*phi, h_bar);
  }

  auto record = [&](int step) {
    res.eval_steps.push_back(step);
    for (std::size_t d = 0; d < task.test.size(); ++d)
      res.curves[d].push_back(evaluate(scorer, theta, task.test[d].examples));
  };
  record(0);
  for (int step = 1; step <= opts.steps; ++step) {
    Mat g = scorer.grad_prompt(theta, task.train);
    if (phi) g = transform(*phi, z, g);
    axpy(-opts.inner_lr, g, theta.theta);
    if (step % opts.eval_every == 0) record(step);
  }
  res.theta = std::move(theta);
  return res;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Per-seed OOD curve: pointwise mean of the target-domain curves.
std::vector<double> ood_curve(const SeedRun& run) {
  const std::size_t n = run.curves[0].size();
  std::vector<double> out(n, 0.0);
  const std::size_t targets = run.curves.size() - 1;
  for (std::size_t d = 1; d < run.curves.size(); ++d)
    for (std::size_t k = 0; k < n; ++k) out[k] += run.curves[d][k] / static_cast<double>(targets);
  return out;
}

MethodSummary summarize(const std::vector<SeedRun>& runs, const std::string& method) {
  std::vector<double> in_final, ood_final;
  std::vector<double> mean_curve;
  int count = 0;
  for (const SeedRun& run : runs) {
    if (run.method != method) continue;
    in_final.push_back(run.curves[0].back());
    const std::vector<double> ood = ood_curve(run);
    ood_final.push_back(ood.back());
    if (mean_curve.empty()) mean_curve.assign(ood.size(), 0.0);
    for (std::size_t k = 0; k < ood.size(); ++k) mean_curve[k] += ood[k];
    ++count;
  }
  for (double& v : mean_curve) v /= count;
  MethodSummary s;
  s.in_final_mean = mean(in_final);
  s.in_final_std = stddev(in_final);
  s.ood_final_mean = mean(ood_final);
  s.ood_final_std = stddev(ood_final);
  // best and gap are read off the seed-mean curve: per-seed maxima are
  // dominated by evaluation noise
  s.ood_best_mean = *std::max_element(mean_curve.begin(), mean_curve.end());
  s.ood_gap_mean = s.ood_best_mean - mean_curve.back();
  return s;
}

}  // namespace

double evaluate(const Scorer& scorer, const PromptState& theta, std::span<const Example> episode) {
  if (episode.empty()) throw std::invalid_argument("evaluate: empty episode");
  int correct = 0;
  for (const Example& ex : episode) {
    double mx = 0.0;
    for (double y : ex.soft_label) mx = std::max(mx, y);
    if (std::abs(mx - 1.0) > 1e-9) throw std::invalid_argument("evaluate: labels must be one-hot");
    if (argmax(scorer.logits(theta, ex.hidden)) == argmax(ex.soft_label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(episode.size());
}

TuneResult prompt_tune(const Scorer& scorer, const Encoder& encoder, const PromptState& theta_star,
                       const RegularizerState& phi_star, const DownstreamTask& task,
                       const TuneOptions& opts) {
  phi_star.validate();
  return tune_loop(scorer, encoder, theta_star, &phi_star, task, opts);
}

TuneResult run_vanilla_pt(const Scorer& scorer, const Encoder& encoder, const DownstreamTask& task,
                          const TuneOptions& opts, int prompt_tokens, double init_std,
                          std::uint64_t seed) {
  PromptState init = PromptState::gaussian_init(prompt_tokens, scorer.config().prompt_dim, init_std,
                                                RngStream(seed).child(kTagVanillaInit).key());
  return tune_loop(scorer, encoder, std::move(init), nullptr, task, opts);
}

DownstreamTask make_shift_task(const Encoder& encoder, const ShiftTaskConfig& cfg) {
  if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0))
    throw std::invalid_argument("make_shift_task: rho must be in [0, 1]");
  if (cfg.shots_per_class < 1 || cfg.test_per_class < 1 || cfg.target_domains < 1)
    throw std::invalid_argument("make_shift_task: bad episode sizes");

  GenConfig gen = cfg.corpus;
  gen.topics = 2;
  gen.vocab_size = encoder.config().vocab_size;
  gen.seed = RngStream(cfg.task_seed).child(kTagShiftTask).key();
  const Corpus corpus = generate_synthetic(gen);

  const auto refs = corpus.flat_refs();
  std::vector<Vec> embeddings;
  embeddings.reserve(refs.size());
  for (const auto& ref : refs) embeddings.push_back(encoder.embed(corpus.sentence(ref)));

  // Recover the two topic groups without supervision.
  KMeansConfig km;
  km.k = 2;
  km.seed = gen.seed;
  const ClusterModel model = kmeans(embeddings, km);

  std::array<std::vector<int>, 2> members;
  for (int i = 0; i < static_cast<int>(embeddings.size()); ++i)
    members[model.assignment[i]].push_back(i);

  RngStream rng = RngStream(cfg.task_seed).child(kTagShiftTask).child(1);
  for (auto& ids : members) {
    for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(ids[i], ids[j]);
    }
  }
  const int need = cfg.shots_per_class + cfg.val_per_class +
                   cfg.test_per_class * (1 + cfg.target_domains);
  if (static_cast<int>(members[0].size()) < need || static_cast<int>(members[1].size()) < need)
    throw std::invalid_argument("make_shift_task: corpus too small for the requested episodes");

  // Sentence-pair similarity examples, mirroring the anchor-task rules: same
  // cluster -> class 0, different cluster -> class 1. The clean signal lives
  // in the pair structure; the nuisance coordinate on the anchor embedding
  // carries correlation +rho with the label in the source domain, -rho in
  // the targets.
  std::array<std::size_t, 2> cursor{0, 0};
  const int nuisance_coord = encoder.embed_dim() - 1;

  auto make_example = [&](int cls, int anchor_cluster, double domain_sign) {
    const int anchor = members[anchor_cluster][cursor[anchor_cluster]++];
    const int partner_cluster = cls == 0 ? anchor_cluster : 1 - anchor_cluster;
    int partner = anchor;
    while (partner == anchor)
      partner = members[partner_cluster][rng.below(members[partner_cluster].size())];
    Vec e = embeddings[anchor];
    const bool agree = rng.uniform01() < (1.0 + cfg.rho) / 2.0;
    const double direction = (cls == 1 ? 1.0 : -1.0) * (agree ? 1.0 : -1.0) * domain_sign;
    e[nuisance_coord] = cfg.nuisance_scale * direction;
    Vec e2 = embeddings[partner];
    e2[nuisance_coord] = cfg.nuisance_scale * rng.gaussian();  // slot noise, label-free
    Example ex;
    ex.hidden = compose_pair(e, e2);
    ex.soft_label = Vec(kPairLabels, 0.0);
    ex.soft_label[cls] = 1.0;
    return ex;
  };
  auto make_episode = [&](int per_class, double domain_sign) {
    std::vector<Example> out;
    out.reserve(2 * per_class);
    for (int i = 0; i < per_class; ++i) {
      // one anchor from each cluster per round keeps consumption balanced
      out.push_back(make_example(0, i % 2, domain_sign));
      out.push_back(make_example(1, (i + 1) % 2, domain_sign));
    }
    return out;
  };

  DownstreamTask task;
  task.format = TaskFormat::sp;
  task.train = make_episode(cfg.shots_per_class, cfg.source_sign);
  task.validation = make_episode(cfg.val_per_class, cfg.source_sign);
  task.test.push_back({"source", make_episode(cfg.test_per_class, cfg.source_sign)});
  for (int t = 0; t < cfg.target_domains; ++t) {
    const std::string name = "target_" + std::string(1, static_cast<char>('a' + t));
    task.test.push_back({name, make_episode(cfg.test_per_class, -cfg.source_sign)});
  }
  return task;
}

BenchmarkReport domain_shift_benchmark(const BenchConfig& cfg) {
  if (cfg.n_seeds < 2) throw std::invalid_argument("domain_shift_benchmark: need at least 2 seeds");

  // One-time meta-training for the SUPMER initialization. Validation tasks
  // come from held-out documents of a base corpus; the training pool is drawn
  // from separately seeded corpora.
  GenConfig gen = cfg.meta_corpus;
  gen.seed = cfg.generator_seed;
  const Corpus full = generate_synthetic(gen);
  const Corpus val_corpus = split_validation(full, cfg.val_fraction, cfg.generator_seed).second;

  EncoderConfig enc_cfg;
  enc_cfg.vocab_size = gen.vocab_size;
  const Encoder encoder(enc_cfg);
  ScorerConfig sc_cfg;
  sc_cfg.prompt_dim = cfg.meta.prompt_dim;
  sc_cfg.embed_dim = enc_cfg.embed_dim;
  const Scorer scorer(sc_cfg);

  auto build_pool = [&](const Corpus& corpus, std::uint64_t seed) {
    std::vector<Vec> embeddings;
    const auto refs = corpus.flat_refs();
    embeddings.reserve(refs.size());
    for (const auto& ref : refs) embeddings.push_back(encoder.embed(corpus.sentence(ref)));
    // The nuisance slot carries incoherent noise during meta-training, so the
    // learned initialization has no stake in it; downstream domains then give
    // the slot its label correlation.
    RngStream slot_rng = RngStream(seed).child(77);
    const int slot = encoder.embed_dim() - 1;
    const double slot_noise = cfg.slot_noise_factor * cfg.shift.nuisance_scale;
    for (Vec& e : embeddings) e[slot] = slot_noise * slot_rng.gaussian();
    KMeansConfig km;
    km.k = cfg.clusters;
    km.seed = seed;
    const ClusterModel clusters = kmeans(embeddings, km);
    const CorpusIndex index = build_index(corpus, std::move(embeddings), clusters);
    TaskGenConfig tg;
    tg.support_size = cfg.meta.support_size;
    tg.query_size = cfg.meta.query_size;
    tg.tasks_per_cluster = cfg.tasks_per_cluster;
    tg.pair_subtask_mix = cfg.meta_pair_mix;
    tg.seed = seed;
    std::vector<MetaTask> pool = make_sentence_pair_tasks(corpus, clusters, index, tg);
    if (cfg.meta_choice_formats) {
      std::vector<MetaTask> mc = make_multi_choice_tasks(corpus, clusters, index, tg);
      std::vector<MetaTask> ss = make_single_sentence_tasks(clusters, index, tg);
      pool.insert(pool.end(), std::make_move_iterator(mc.begin()),
                  std::make_move_iterator(mc.end()));
      pool.insert(pool.end(), std::make_move_iterator(ss.begin()),
                  std::make_move_iterator(ss.end()));
    }
    return pool;
  };

  TrainConfig meta = cfg.meta;
  meta.seed = cfg.generator_seed;
  // meta pool drawn from several corpora so the learned skill is
  // corpus-agnostic, mirroring downstream tasks from unseen corpora
  std::vector<MetaTask> train_pool;
  for (int c = 0; c < cfg.meta_corpora; ++c) {
    GenConfig gc = cfg.meta_corpus;
    gc.seed = RngStream(cfg.generator_seed).child(200 + c).key();
    const Corpus extra = generate_synthetic(gc);
    const auto pool = build_pool(extra, gc.seed);
    train_pool.insert(train_pool.end(), pool.begin(), pool.end());
  }
  const std::vector<MetaTask> val_pool = build_pool(val_corpus, cfg.generator_seed + 1);
  const MetaTrainResult trained = meta_train(train_pool, val_pool, scorer, encoder, meta);

  BenchmarkReport report;
  report.rho = cfg.shift.rho;
  report.generator_seed = cfg.generator_seed;
  report.meta_steps = trained.final_state.step;
  report.domains.push_back("source");
  for (int t = 0; t < cfg.shift.target_domains; ++t)
    report.domains.push_back("target_" + std::string(1, static_cast<char>('a' + t)));

  for (int i = 0; i < cfg.n_seeds; ++i) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
    report.seeds.push_back(seed);
    ShiftTaskConfig shift = cfg.shift;
    shift.task_seed = RngStream(cfg.generator_seed).child(100 + i).key() ^ seed;
    const DownstreamTask task = make_shift_task(encoder, shift);

    TuneResult supmer =
        prompt_tune(scorer, encoder, trained.theta_star, trained.phi_star, task, cfg.tune);
    TuneResult vanilla = run_vanilla_pt(scorer, encoder, task, cfg.tune, cfg.meta.prompt_tokens,
                                        cfg.vanilla_init_std, seed);
    if (report.eval_steps.empty()) report.eval_steps = supmer.eval_steps;
    report.runs.push_back({"supmer", seed, std::move(supmer.curves)});
    report.runs.push_back({"vanilla_pt", seed, std::move(vanilla.curves)});
  }

  report.supmer = summarize(report.runs, "supmer");
  report.vanilla = summarize(report.runs, "vanilla_pt");
  return report;
}

namespace {

ordered_json summary_to_json(const MethodSummary& s) {
  ordered_json j;
  j["in_final_mean"] = s.in_final_mean;
  j["in_final_std"] = s.in_final_std;
  j["ood_final_mean"] = s.ood_final_mean;
  j["ood_final_std"] = s.ood_final_std;
  j["ood_best_mean"] = s.ood_best_mean;
  j["ood_gap_mean"] = s.ood_gap_mean;
  return j;
}

MethodSummary summary_from_json(const ordered_json& j) {
  MethodSummary s;
  s.in_final_mean = j.at("in_final_mean").get<double>();
  s.in_final_std = j.at("in_final_std").get<double>();
  s.ood_final_mean = j.at("ood_final_mean").get<double>();
  s.ood_final_std = j.at("ood_final_std").get<double>();
  s.ood_best_mean = j.at("ood_best_mean").get<double>();
  s.ood_gap_mean = j.at("ood_gap_mean").get<double>();
  return s;
}

}  // namespace

void save_report(const std::string& path, const BenchmarkReport& report) {
  ordered_json j;
  j["seeds"] = report.seeds;
  j["eval_steps"] = report.eval_steps;
  j["domains"] = report.domains;
  j["rho"] = report.rho;
  j["generator_seed"] = report.generator_seed;
  j["meta_steps"] = report.meta_steps;
  ordered_json runs = ordered_json::array();
  for (const SeedRun& run : report.runs) {
    ordered_json r;
    r["method"] = run.method;
    r["seed"] = run.seed;
    r["curves"] = run.curves;
    runs.push_back(r);
  }
  j["runs"] = runs;
  j["summary"]["supmer"] = summary_to_json(report.supmer);
  j["summary"]["vanilla_pt"] = summary_to_json(report.vanilla);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_report: cannot open " + path);
  out << j.dump(2) << "\n";
}

BenchmarkReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report: cannot open " + path);
  ordered_json j;
  in >> j;
  BenchmarkReport report;
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  report.eval_steps = j.at("eval_steps").get<std::vector<int>>();
  report.domains = j.at("domains").get<std::vector<std::string>>();
  report.rho = j.at("rho").get<double>();
  report.generator_seed = j.at("generator_seed").get<std::uint64_t>();
  report.meta_steps = j.at("meta_steps").get<std::int64_t>();
  for (const auto& r : j.at("runs")) {
    SeedRun run;
    run.method = r.at("method").get<std::string>();
    run.seed = r.at("seed").get<std::uint64_t>();
    run.curves = r.at("curves").get<std::vector<std::vector<double>>>();
    report.runs.push_back(std::move(run));
  }
  report.supmer = summary_from_json(j.at("summary").at("supmer"));
  report.vanilla = summary_from_json(j.at("summary").at("vanilla_pt"));
  return report;
}

void save_downstream_task(const std::string& path, const DownstreamTask& task) {
  ordered_json j;
  j["format"] = format_name(task.format);
  auto dump_episode = [](const std::vector<Example>& eps) {
    ordered_json arr = ordered_json::array();
    for (const Example& ex : eps) {
      ordered_json e;
      e["h"] = ex.hidden.values;
      e["y"] = ex.soft_label;
      arr.push_back(e);
    }
    return arr;
  };
  j["train"] = dump_episode(task.train);
  j["validation"] = dump_episode(task.validation);
  ordered_json tests = ordered_json::array();
  for (const DomainEpisode& ep : task.test) {
    ordered_json t;
    t["domain"] = ep.domain;
    t["examples"] = dump_episode(ep.examples);
    tests.push_back(t);
  }
  j["test"] = tests;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_downstream_task: cannot open " + path);
  out << j.dump() << "\n";
}

DownstreamTask load_downstream_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_downstream_task: cannot open " + path);
  ordered_json j;
  in >> j;
  DownstreamTask task;
  task.format = format_from_name(j.at("format").get<std::string>());
  const HiddenFormat hf = hidden_format_of(task.format);
  auto parse_episode = [&](const ordered_json& arr) {
    std::vector<Example> out;
    for (const auto& e : arr) {
      Example ex;
      ex.hidden.format = hf;
      ex.hidden.values = e.at("h").get<Vec>();
      ex.soft_label = e.at("y").get<Vec>();
      out.push_back(std::move(ex));
    }
    return out;
  };
  task.train = parse_episode(j.at("train"));
  task.validation = parse_episode(j.at("validation"));
  for (const auto& t : j.at("test"))
    task.test.push_back({t.at("domain").get<std::string>(), parse_episode(t.at("examples"))});
  return task;
}

}  // namespace supmer
