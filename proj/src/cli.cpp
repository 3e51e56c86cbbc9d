#include "supmer/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "supmer/clustering.hpp"
#include "supmer/harness.hpp"
#include "supmer/serialize.hpp"

namespace supmer {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct CorpusFlags {
  GenConfig gen;
  void attach(CLI::App* cmd) {
    cmd->add_option("--topics", gen.topics, "Number of latent topics");
    cmd->add_option("--docs", gen.docs, "Number of documents");
    cmd->add_option("--min-doc-sentences", gen.min_doc_sentences);
    cmd->add_option("--max-doc-sentences", gen.max_doc_sentences);
    cmd->add_option("--min-tokens", gen.min_tokens);
    cmd->add_option("--max-tokens", gen.max_tokens);
    cmd->add_option("--vocab", gen.vocab_size, "Vocabulary size");
    cmd->add_option("--concentration", gen.topic_concentration, "Dirichlet concentration");
  }
};

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return TrainConfig::from_key_values(text.str());
}

int infer_embed_dim(const std::vector<MetaTask>& tasks) {
  if (tasks.empty()) throw std::runtime_error("no tasks to infer dimensions from");
  const MetaTask& t = tasks.front();
  const std::vector<Example>& eps = t.support.empty() ? t.query : t.support;
  if (eps.empty()) throw std::runtime_error("task has no examples");
  const int dim = static_cast<int>(eps.front().hidden.values.size());
  const int div = t.format == TaskFormat::sp ? 3 : 5;
  if (dim % div != 0) throw std::runtime_error("task hidden dimension inconsistent with format");
  return dim / div;
}

struct Pipeline {
  Corpus corpus;
  std::vector<Vec> embeddings;
  ClusterModel clusters;
};

std::vector<MetaTask> tasks_from_corpus(const Corpus& corpus, const Encoder& encoder,
                                        const std::string& formats, int k_clusters,
                                        const TaskGenConfig& tg, std::uint64_t kmeans_seed) {
  std::vector<Vec> embeddings;
  const auto refs = corpus.flat_refs();
  embeddings.reserve(refs.size());
  for (const auto& ref : refs) embeddings.push_back(encoder.embed(corpus.sentence(ref)));
  KMeansConfig km;
  km.k = k_clusters;
  km.seed = kmeans_seed;
  const ClusterModel clusters = kmeans(embeddings, km);
  const CorpusIndex index = build_index(corpus, encoder, clusters);

  std::vector<MetaTask> pool;
  auto wants = [&](const std::string& f) {
    return formats.find(f) != std::string::npos;
  };
  if (wants("sp")) {
    auto tasks = make_sentence_pair_tasks(corpus, clusters, index, tg);
    pool.insert(pool.end(), std::make_move_iterator(tasks.begin()),
                std::make_move_iterator(tasks.end()));
  }
  if (wants("mc")) {
    auto tasks = make_multi_choice_tasks(corpus, clusters, index, tg);
    pool.insert(pool.end(), std::make_move_iterator(tasks.begin()),
                std::make_move_iterator(tasks.end()));
  }
  if (wants("ss")) {
    auto tasks = make_single_sentence_tasks(clusters, index, tg);
    pool.insert(pool.end(), std::make_move_iterator(tasks.begin()),
                std::make_move_iterator(tasks.end()));
  }
  if (pool.empty()) throw std::runtime_error("no tasks generated (check --formats)");
  return pool;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

int run(int argc, const char* const* argv) {
  CLI::App app{"SUPMER desk-scale pipeline: self-supervised meta-prompt learning with "
               "meta-gradient regularization"};
  app.require_subcommand(1);
  app.fallthrough();  // let --seed appear after the subcommand name

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Root random seed")->envname("SUPMER_SEED");

  // ---- gen-corpus ----
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic topic-structured corpus");
  std::string gen_out;
  CorpusFlags gen_flags;
  gen_cmd->add_option("--out", gen_out, "Output corpus file")->required();
  gen_flags.attach(gen_cmd);

  // ---- build-tasks ----
  auto* build_cmd = app.add_subcommand("build-tasks",
                                       "Encode, cluster and build anchor meta-training tasks");
  std::string build_corpus, build_out_dir, build_formats = "sp,mc,ss";
  int build_clusters = 16, build_support = 32, build_query = 32, build_tpc = 2;
  int build_vocab = 512;
  double build_val_fraction = 0.1;
  std::uint64_t encoder_seed = 1;
  build_cmd->add_option("--corpus", build_corpus, "Corpus file")->required();
  build_cmd->add_option("--out-dir,--out", build_out_dir, "Output directory")->required();
  build_cmd->add_option("--clusters", build_clusters, "K-means cluster count per split");
  build_cmd->add_option("--support", build_support, "Support set size per task");
  build_cmd->add_option("--query", build_query, "Query set size per task");
  build_cmd->add_option("--tasks-per-cluster", build_tpc);
  build_cmd->add_option("--formats", build_formats, "Comma list out of sp,mc,ss");
  build_cmd->add_option("--val-fraction", build_val_fraction, "Document fraction held out");
  build_cmd->add_option("--vocab", build_vocab, "Vocabulary size for corpus loading");
  build_cmd->add_option("--encoder-seed", encoder_seed, "Frozen encoder seed");

  // ---- meta-train ----
  auto* train_cmd = app.add_subcommand("meta-train", "Bi-level meta-training of theta and phi");
  std::string train_tasks, train_val_tasks, train_out_dir, train_config;
  int train_max_steps = -1;
  std::uint64_t train_encoder_seed = 1, scorer_seed = 2;
  train_cmd->add_option("--tasks", train_tasks, "Training task pool (JSONL)")->required();
  train_cmd->add_option("--val-tasks", train_val_tasks, "Validation task pool (JSONL)");
  train_cmd->add_option("--out-dir,--out", train_out_dir, "Output directory")->required();
  train_cmd->add_option("--config", train_config, "TrainConfig key=value file");
  train_cmd->add_option("--max-steps", train_max_steps, "Override max training steps");
  train_cmd->add_option("--encoder-seed", train_encoder_seed, "Frozen encoder seed");
  train_cmd->add_option("--scorer-seed", scorer_seed, "Frozen scorer seed");

  // ---- tune ----
  auto* tune_cmd = app.add_subcommand("tune", "Downstream few-shot prompt tuning");
  std::string tune_ckpt, tune_task, tune_out_dir;
  TuneOptions tune_opts;
  bool tune_vanilla = false;
  double vanilla_std = 0.5;
  tune_cmd->add_option("--checkpoint", tune_ckpt, "Meta-trained checkpoint")->required();
  tune_cmd->add_option("--task", tune_task, "Downstream task file (JSON)")->required();
  tune_cmd->add_option("--out-dir,--out", tune_out_dir, "Output directory")->required();
  tune_cmd->add_option("--steps", tune_opts.steps, "Tuning steps");
  tune_cmd->add_option("--lr", tune_opts.inner_lr, "Tuning learning rate");
  tune_cmd->add_option("--eval-every", tune_opts.eval_every, "Evaluation interval");
  tune_cmd->add_flag("--vanilla", tune_vanilla, "Vanilla PT baseline: random init, no regulation");
  tune_cmd->add_option("--vanilla-std", vanilla_std, "Init stddev for --vanilla");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a downstream task");
  std::string eval_ckpt, eval_task, eval_episode = "test";
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--task", eval_task)->required();
  eval_cmd->add_option("--episode", eval_episode, "train | validation | test");

  // ---- bench-dg ----
  auto* bench_cmd = app.add_subcommand("bench-dg", "Domain-shift benchmark: SUPMER vs vanilla PT");
  std::string bench_out_dir, bench_dump_task;
  BenchConfig bench;
  bench_cmd->add_option("--out-dir,--out", bench_out_dir, "Output directory")->required();
  bench_cmd->add_option("--seeds", bench.n_seeds, "Number of benchmark seeds");
  bench_cmd->add_option("--rho", bench.shift.rho, "Nuisance-label correlation strength");
  bench_cmd->add_option("--nuisance", bench.shift.nuisance_scale, "Nuisance coordinate magnitude");
  bench_cmd->add_option("--shots", bench.shift.shots_per_class, "Train shots per class");
  bench_cmd->add_option("--test-per-class", bench.shift.test_per_class);
  bench_cmd->add_option("--tune-steps", bench.tune.steps);
  bench_cmd->add_option("--tune-lr", bench.tune.inner_lr);
  bench_cmd->add_option("--eval-every", bench.tune.eval_every);
  bench_cmd->add_option("--meta-steps", bench.meta.max_steps, "Meta-training steps for the init");
  bench_cmd->add_option("--generator-seed", bench.generator_seed, "Pinned benchmark generator seed");
  bench_cmd->add_option("--dump-task", bench_dump_task, "Also write the first seed's task file");

  // ---- emit-plots ----
  auto* plots_cmd = app.add_subcommand("emit-plots", "Write plot-ready CSV files");
  std::string plots_metrics, plots_report, plots_out_dir;
  plots_cmd->add_option("--metrics", plots_metrics, "metrics.jsonl from meta-train");
  plots_cmd->add_option("--report", plots_report, "report.json from bench-dg");
  plots_cmd->add_option("--out-dir,--out", plots_out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen_cmd->parsed()) {
    gen_flags.gen.seed = seed;
    const Corpus corpus = generate_synthetic(gen_flags.gen);
    save_corpus(corpus, gen_out);
    std::cout << "wrote " << gen_out << " (" << corpus.documents.size() << " documents, "
              << corpus.sentence_count() << " sentences)\n";
    return 0;
  }

  if (build_cmd->parsed()) {
    fs::create_directories(build_out_dir);
    const Corpus full = load_corpus(build_corpus, build_vocab);
    const auto [train_corpus, val_corpus] = split_validation(full, build_val_fraction, seed);
    EncoderConfig enc_cfg;
    enc_cfg.vocab_size = build_vocab;
    enc_cfg.seed = encoder_seed;
    const Encoder encoder(enc_cfg);
    TaskGenConfig tg;
    tg.support_size = build_support;
    tg.query_size = build_query;
    tg.tasks_per_cluster = build_tpc;
    tg.seed = seed;
    const auto train_tasks_v =
        tasks_from_corpus(train_corpus, encoder, build_formats, build_clusters, tg, seed);
    TaskGenConfig tg_val = tg;
    tg_val.seed = seed + 1;
    const auto val_tasks_v =
        tasks_from_corpus(val_corpus, encoder, build_formats, build_clusters, tg_val, seed + 1);
    save_tasks_jsonl((fs::path(build_out_dir) / "train_tasks.jsonl").string(), train_tasks_v);
    save_tasks_jsonl((fs::path(build_out_dir) / "val_tasks.jsonl").string(), val_tasks_v);
    std::cout << "wrote " << train_tasks_v.size() << " train tasks, " << val_tasks_v.size()
              << " val tasks to " << build_out_dir << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    fs::create_directories(train_out_dir);
    TrainConfig cfg = train_config.empty() ? TrainConfig{} : load_train_config(train_config);
    if (app.count("--seed") || train_config.empty()) cfg.seed = seed;
    if (train_max_steps >= 0) cfg.max_steps = train_max_steps;
    cfg.validate();

    const auto pool = load_tasks_jsonl(train_tasks);
    std::vector<MetaTask> val_pool;
    if (!train_val_tasks.empty()) val_pool = load_tasks_jsonl(train_val_tasks);
    const int embed_dim = infer_embed_dim(pool);

    EncoderConfig enc_cfg;
    enc_cfg.embed_dim = embed_dim;
    enc_cfg.seed = train_encoder_seed;
    const Encoder encoder(enc_cfg);
    ScorerConfig sc_cfg;
    sc_cfg.prompt_dim = cfg.prompt_dim;
    sc_cfg.embed_dim = embed_dim;
    sc_cfg.seed = scorer_seed;
    const Scorer scorer(sc_cfg);

    std::ofstream metrics((fs::path(train_out_dir) / "metrics.jsonl").string());
    if (!metrics) throw std::runtime_error("cannot open metrics.jsonl for writing");
    const MetaTrainResult result = meta_train(pool, val_pool, scorer, encoder, cfg, &metrics);

    Checkpoint ckpt;
    ckpt.state.theta = result.theta_star;
    ckpt.state.phi = result.phi_star;
    ckpt.state.s = result.final_state.s;
    ckpt.state.step = result.best_step;
    ckpt.state.rng_root = cfg.seed;
    ckpt.config_digest = cfg.digest();
    ckpt.model.prompt_tokens = cfg.prompt_tokens;
    ckpt.model.prompt_dim = cfg.prompt_dim;
    ckpt.model.embed_dim = embed_dim;
    ckpt.model.token_dim = enc_cfg.token_dim;
    ckpt.model.hidden_width = sc_cfg.hidden_width;
    ckpt.model.vocab_size = enc_cfg.vocab_size;
    ckpt.model.encoder_seed = train_encoder_seed;
    ckpt.model.scorer_seed = scorer_seed;
    save_checkpoint((fs::path(train_out_dir) / "checkpoint.json").string(), ckpt);

    Checkpoint final_ckpt = ckpt;
    final_ckpt.state = result.final_state;
    save_checkpoint((fs::path(train_out_dir) / "final_checkpoint.json").string(), final_ckpt);
    std::cout << "meta-training done: " << result.final_state.step << " steps, best step "
              << result.best_step << "\n";
    return 0;
  }

  if (tune_cmd->parsed()) {
    fs::create_directories(tune_out_dir);
    const Checkpoint ckpt = load_checkpoint(tune_ckpt);
    const DownstreamTask task = load_downstream_task(tune_task);
    EncoderConfig enc_cfg;
    enc_cfg.vocab_size = ckpt.model.vocab_size;
    enc_cfg.token_dim = ckpt.model.token_dim;
    enc_cfg.embed_dim = ckpt.model.embed_dim;
    enc_cfg.seed = ckpt.model.encoder_seed;
    const Encoder encoder(enc_cfg);
    ScorerConfig sc_cfg;
    sc_cfg.prompt_dim = ckpt.model.prompt_dim;
    sc_cfg.embed_dim = ckpt.model.embed_dim;
    sc_cfg.hidden_width = ckpt.model.hidden_width;
    sc_cfg.seed = ckpt.model.scorer_seed;
    const Scorer scorer(sc_cfg);

    const TuneResult result =
        tune_vanilla ? run_vanilla_pt(scorer, encoder, task, tune_opts, ckpt.model.prompt_tokens,
                                      vanilla_std, seed)
                     : prompt_tune(scorer, encoder, ckpt.state.theta, ckpt.state.phi, task,
                                   tune_opts);

    std::ostringstream csv;
    csv << "step";
    for (const std::string& d : result.domains) csv << "," << d;
    csv << "\n";
    csv.precision(17);
    for (std::size_t k = 0; k < result.eval_steps.size(); ++k) {
      csv << result.eval_steps[k];
      for (std::size_t d = 0; d < result.curves.size(); ++d) csv << "," << result.curves[d][k];
      csv << "\n";
    }
    write_text((fs::path(tune_out_dir) / "tune_curve.csv").string(), csv.str());

    Checkpoint tuned = ckpt;
    tuned.state.theta = result.theta;
    save_checkpoint((fs::path(tune_out_dir) / "tuned_checkpoint.json").string(), tuned);
    std::cout << "wrote tuning curve and tuned checkpoint to " << tune_out_dir << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const Checkpoint ckpt = load_checkpoint(eval_ckpt);
    const DownstreamTask task = load_downstream_task(eval_task);
    ScorerConfig sc_cfg;
    sc_cfg.prompt_dim = ckpt.model.prompt_dim;
    sc_cfg.embed_dim = ckpt.model.embed_dim;
    sc_cfg.hidden_width = ckpt.model.hidden_width;
    sc_cfg.seed = ckpt.model.scorer_seed;
    const Scorer scorer(sc_cfg);

    ordered_json out;
    if (eval_episode == "train") {
      out["train"] = evaluate(scorer, ckpt.state.theta, task.train);
    } else if (eval_episode == "validation") {
      out["validation"] = evaluate(scorer, ckpt.state.theta, task.validation);
    } else if (eval_episode == "test") {
      for (const DomainEpisode& ep : task.test)
        out[ep.domain] = evaluate(scorer, ckpt.state.theta, ep.examples);
    } else {
      throw CLI::ValidationError("--episode must be train, validation or test");
    }
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (bench_cmd->parsed()) {
    fs::create_directories(bench_out_dir);
    bench.base_seed = seed;
    const BenchmarkReport report = domain_shift_benchmark(bench);
    save_report((fs::path(bench_out_dir) / "report.json").string(), report);
    if (!bench_dump_task.empty()) {
      EncoderConfig enc_cfg;
      enc_cfg.vocab_size = bench.meta_corpus.vocab_size;
      const Encoder encoder(enc_cfg);
      ShiftTaskConfig shift = bench.shift;
      shift.task_seed = RngStream(bench.generator_seed).child(100).key() ^ bench.base_seed;
      save_downstream_task(bench_dump_task, make_shift_task(encoder, shift));
    }
    std::cout << "supmer ood final " << report.supmer.ood_final_mean << ", vanilla ood final "
              << report.vanilla.ood_final_mean << "\n";
    return 0;
  }

  if (plots_cmd->parsed()) {
    if (plots_metrics.empty() && plots_report.empty())
      throw CLI::ValidationError("emit-plots needs --metrics and/or --report");
    fs::create_directories(plots_out_dir);
    if (!plots_metrics.empty()) {
      std::ifstream in(plots_metrics);
      if (!in) throw std::runtime_error("cannot open " + plots_metrics);
      std::ostringstream csv;
      csv << "step,s,b\n";
      csv.precision(17);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const ordered_json j = ordered_json::parse(line);
        csv << j.at("step").get<std::int64_t>() << "," << j.at("s").get<double>() << ","
            << j.at("b").get<double>() << "\n";
      }
      write_text((fs::path(plots_out_dir) / "inner_product_vs_step.csv").string(), csv.str());
    }
    if (!plots_report.empty()) {
      const BenchmarkReport report = load_report(plots_report);
      std::ostringstream csv;
      csv << "method,seed,domain,step,accuracy\n";
      csv.precision(17);
      for (const SeedRun& run : report.runs)
        for (std::size_t d = 0; d < run.curves.size(); ++d)
          for (std::size_t k = 0; k < run.curves[d].size(); ++k)
            csv << run.method << "," << run.seed << "," << report.domains[d] << ","
                << report.eval_steps[k] << "," << run.curves[d][k] << "\n";
      write_text((fs::path(plots_out_dir) / "accuracy_vs_step.csv").string(), csv.str());
    }
    std::cout << "wrote plot data to " << plots_out_dir << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace supmer
