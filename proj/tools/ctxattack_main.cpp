#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxattack/context_model.hpp"
#include "ctxattack/corpus.hpp"
#include "ctxattack/harness.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/pspm.hpp"
#include "ctxattack/synthetic.hpp"
#include "ctxattack/victim.hpp"

namespace {

using namespace ctxattack;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_gen_corpus(const SyntheticConfig& cfg, const std::string& out,
                   const std::string& labels_out) {
  const Corpus corpus = generate_corpus(cfg);
  save_corpus(out, corpus);
  if (!labels_out.empty()) save_label_file(labels_out, corpus.labels);
  std::cerr << "wrote " << corpus.scenes.size() << " scenes over "
            << corpus.labels.size() << " labels to " << out << "\n";
  return 0;
}

int cmd_build_context(const std::string& corpus_path, const std::string& labels_path,
                      double eta, const std::string& out) {
  Corpus corpus = labels_path.empty()
                      ? load_corpus(corpus_path)
                      : load_corpus(corpus_path, load_label_file(labels_path));
  const ContextModel model = build_context_model(corpus, eta);
  save_context_model(out, model);
  const ContextGraph graph = make_graph(model);
  int edges = 0;
  for (int i = 0; i < graph.n(); ++i)
    for (int j = i; j < graph.n(); ++j)
      if (graph.edge(i, j)) ++edges;
  std::cerr << "context model over " << model.labels.size() << " labels, " << edges
            << " edges at eta=" << format_number(eta) << ", written to " << out << "\n";
  return 0;
}

int cmd_build_pspm(const std::string& labels_path, const std::string& context_path,
                   double epsilon, int trials_per_pair, std::uint64_t seed,
                   int ensemble_size, int hidden, double jitter,
                   const std::string& out) {
  LabelSet labels;
  if (!labels_path.empty())
    labels = load_label_file(labels_path);
  else if (!context_path.empty())
    labels = load_context_model(context_path).labels;
  else
    throw std::runtime_error("build-pspm needs --labels or --context");

  ToyModelConfig toy_cfg;
  toy_cfg.hidden_dim = hidden;
  const auto ensemble = make_toy_ensemble(labels.size(), toy_cfg, seed, ensemble_size);
  PgdConfig pgd_cfg;
  pgd_cfg.epsilon = epsilon;
  Rng rng = derive_rng(seed, {"build-pspm", format_number(epsilon)});
  const Pspm pspm = build_pspm_from_toy(ensemble, labels, pgd_cfg, trials_per_pair, rng,
                                        jitter);
  save_pspm(out, pspm);

  double sum = 0;
  int cells = 0;
  for (int i = 0; i < pspm.n(); ++i)
    for (int j = 0; j < pspm.n(); ++j)
      if (i != j) {
        sum += pspm.probs.at(i, j);
        ++cells;
      }
  std::cerr << "pspm at eps=" << format_number(epsilon) << ": mean success "
            << (cells ? sum / cells : 0) << " over " << cells << " pairs, written to "
            << out << "\n";
  return 0;
}

int cmd_make_victim(const std::string& pspm_path, double vanish, double mislabel,
                    const std::string& model_id, const std::string& out) {
  const Pspm pspm = load_pspm(pspm_path);
  save_model(out, make_white_box(pspm, vanish, mislabel, model_id));
  std::cerr << "victim model '" << model_id << "' written to " << out << "\n";
  return 0;
}

int cmd_derive_blackbox(const std::string& model_path, double tau, double noise,
                        double vanish_increase, std::uint64_t seed,
                        const std::string& model_id, const std::string& out) {
  const TrueSuccessModel wb = load_model(model_path);
  const std::string id = model_id.empty() ? wb.model_id + "-bb" : model_id;
  Rng rng = derive_rng(seed, {"derive-blackbox", id});
  save_model(out, derive_blackbox(wb, tau, rng, {noise, vanish_increase}, id));
  std::cerr << "black-box model '" << id << "' written to " << out << "\n";
  return 0;
}

int cmd_plan(const std::string& corpus_path, const std::string& context_path,
             const std::string& pspm_path, const std::string& scene_id,
             int victim_index, const std::string& target, const std::string& method_str,
             bool strict_clique, const std::string& strategy_str, int q,
             std::uint64_t seed, std::optional<double> eta, double overlap_threshold,
             bool no_merge, const std::string& out) {
  const ContextModel ctx = load_context_model(context_path);
  const Corpus corpus = load_corpus(corpus_path, ctx.labels);
  const ContextGraph graph = make_graph(ctx, eta);

  const Scene* scene = nullptr;
  for (const Scene& s : corpus.scenes)
    if (s.scene_id == scene_id) {
      scene = &s;
      break;
    }
  if (!scene) throw std::runtime_error("scene '" + scene_id + "' not in corpus");

  const AttackGoal goal =
      make_attack_goal(*scene, victim_index, ctx.labels.index(target));
  const PlanMethod method = parse_method(method_str);
  Rng rng = derive_rng(seed, {"plan", scene_id, method_str});

  std::vector<AttackPlan> plans;
  switch (method) {
    case PlanMethod::ContextAgnostic:
      plans.push_back(plan_context_agnostic(goal, ctx.labels, rng));
      break;
    case PlanMethod::Zqa:
      plans.push_back(plan_zero_query_uniform(goal, graph, rng));
      break;
    case PlanMethod::ZqaPspm: {
      if (pspm_path.empty()) throw std::runtime_error("zqa-pspm needs --pspm");
      const Pspm pspm = load_pspm(pspm_path);
      plans.push_back(plan_zero_query(goal, graph, pspm, parse_strategy(strategy_str),
                                      strict_clique));
      break;
    }
    case PlanMethod::FewQuery: {
      FewQuerySequence seq =
          plan_few_query(goal, graph, std::min(q, scene->size()), rng);
      plans = std::move(seq.plans);
      break;
    }
  }
  if (!no_merge)
    for (AttackPlan& plan : plans)
      plan = apply_overlap_merge(std::move(plan), goal, overlap_threshold);

  std::string text;
  for (const AttackPlan& plan : plans) {
    text += plan_to_json(plan, goal, ctx.labels);
    text += '\n';
  }
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out,
                 const std::string& markdown, const std::string& dump_trials,
                 std::optional<int> workers, std::optional<double> eta) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (workers) cfg.workers = *workers;
  if (eta) cfg.eta_override = eta;

  const ExperimentResult result = run_experiment(cfg, !dump_trials.empty());
  for (const std::string& note : result.notes) std::cerr << note << "\n";

  const std::string csv = render_report(result.table, ReportFormat::Csv);
  if (out.empty())
    std::cout << csv;
  else
    write_text(out, csv);
  if (!markdown.empty())
    write_text(markdown, render_report(result.table, ReportFormat::Markdown));
  if (!dump_trials.empty()) {
    std::string lines;
    for (const TrialDumpRecord& rec : result.trials) {
      lines += trial_to_json(rec);
      lines += '\n';
    }
    write_text(dump_trials, lines);
  }
  return 0;
}

int cmd_pgd_demo(double epsilon, double lambda, int max_iter, int target, int source,
                 int classes, int dim, int hidden, std::uint64_t seed, double jitter) {
  ToyModelConfig cfg;
  cfg.input_dim = dim;
  cfg.hidden_dim = hidden;
  const ToyClassifier clf = make_toy_classifier(classes, cfg, seed);
  if (target < 0 || target >= classes) throw std::runtime_error("target class out of range");
  if (source < 0 || source >= classes) throw std::runtime_error("source class out of range");

  Rng rng = derive_rng(seed, {"pgd-demo"});
  std::vector<double> start(clf.anchor(source).begin(), clf.anchor(source).end());
  for (double& v : start)
    v = std::clamp(v + rng.uniform(-jitter, jitter), 0.0, 255.0);

  PgdConfig pgd_cfg{epsilon, lambda, max_iter};
  const PgdResult res = pgd_attack(clf, start, target, pgd_cfg);

  double max_abs = 0;
  bool in_bounds = true;
  for (int i = 0; i < dim; ++i) {
    max_abs = std::max(max_abs, std::abs(res.x_adv[i] - start[i]));
    if (res.x_adv[i] < 0 || res.x_adv[i] > 255) in_bounds = false;
  }
  std::cout << "source class      : " << source << " (predicted "
            << clf.predict(start) << ")\n"
            << "target class      : " << target << "\n"
            << "success           : " << (res.success ? "yes" : "no") << "\n"
            << "iterations        : " << res.iterations_used << "/" << max_iter << "\n"
            << "final prediction  : " << clf.predict(res.x_adv) << "\n"
            << "max |delta|       : " << max_abs << " (budget " << epsilon << ")\n"
            << "pixels in [0,255] : " << (in_bounds ? "yes" : "no") << "\n";
  return res.success ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-consistent attack planning and simulation toolkit"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic scene corpus");
  SyntheticConfig syn_cfg;
  std::string gen_out = "corpus.jsonl", gen_labels_out;
  gen->add_option("--out", gen_out, "output JSON-Lines path");
  gen->add_option("--labels-out", gen_labels_out, "also write the label list here");
  gen->add_option("--scenes", syn_cfg.num_scenes, "number of scenes");
  gen->add_option("--num-labels", syn_cfg.num_labels, "label universe size");
  gen->add_option("--seed", syn_cfg.seed, "generator seed");
  gen->add_option("--min-objects", syn_cfg.min_objects, "min objects per scene");
  gen->add_option("--max-objects", syn_cfg.max_objects, "max objects per scene");

  // build-context
  auto* bctx = app.add_subcommand("build-context", "derive a co-occurrence context model");
  std::string bctx_corpus, bctx_labels, bctx_out = "context.json";
  double bctx_eta = 0;
  bctx->add_option("--corpus", bctx_corpus, "JSON-Lines corpus")->required();
  bctx->add_option("--labels", bctx_labels, "optional explicit label file");
  bctx->add_option("--eta", bctx_eta, "edge threshold stored with the model");
  bctx->add_option("--out", bctx_out, "output path");

  // build-pspm
  auto* bpspm = app.add_subcommand("build-pspm",
                                   "estimate a success table from the toy attack engine");
  std::string bpspm_labels, bpspm_context, bpspm_out = "pspm.json";
  double bpspm_eps = 10;
  int bpspm_trials = 200, bpspm_ensemble = 1, bpspm_hidden = 0;
  double bpspm_jitter = 14.0;
  std::uint64_t bpspm_seed = 1;
  bpspm->add_option("--epsilon", bpspm_eps, "perturbation budget")->required();
  bpspm->add_option("--trials-per-pair", bpspm_trials, "attack trials per label pair");
  bpspm->add_option("--labels", bpspm_labels, "label file");
  bpspm->add_option("--context", bpspm_context, "context model to take labels from");
  bpspm->add_option("--seed", bpspm_seed, "seed");
  bpspm->add_option("--ensemble-size", bpspm_ensemble, "toy classifiers in the ensemble");
  bpspm->add_option("--hidden", bpspm_hidden, "hidden units (0 = linear)");
  bpspm->add_option("--jitter", bpspm_jitter, "anchor jitter amplitude");
  bpspm->add_option("--out", bpspm_out, "output path");

  // make-victim
  auto* mkv = app.add_subcommand("make-victim",
                                 "materialize a white-box victim model from a success table");
  std::string mkv_pspm, mkv_out = "wb.json", mkv_id = "wb";
  double mkv_vanish = 0.05, mkv_mislabel = 0.05;
  mkv->add_option("--pspm", mkv_pspm, "success table file")->required();
  mkv->add_option("--vanish", mkv_vanish, "vanish probability on failed perturbations");
  mkv->add_option("--mislabel", mkv_mislabel, "mislabel probability on failed perturbations");
  mkv->add_option("--model-id", mkv_id, "model identifier");
  mkv->add_option("--out", mkv_out, "output path");

  // derive-blackbox
  auto* dbb = app.add_subcommand("derive-blackbox",
                                 "derive a degraded transfer model from a victim model");
  std::string dbb_model, dbb_out = "bb.json", dbb_id;
  double dbb_tau = 0.55, dbb_noise = 0.05, dbb_vanish_inc = 0.05;
  std::uint64_t dbb_seed = 1;
  dbb->add_option("--model", dbb_model, "source model file")->required();
  dbb->add_option("--tau", dbb_tau, "transfer coefficient in (0,1]");
  dbb->add_option("--noise", dbb_noise, "uniform noise amplitude");
  dbb->add_option("--vanish-increase", dbb_vanish_inc, "added vanish probability");
  dbb->add_option("--seed", dbb_seed, "seed");
  dbb->add_option("--model-id", dbb_id, "model identifier");
  dbb->add_option("--out", dbb_out, "output path");

  // plan
  auto* plan = app.add_subcommand("plan", "plan an attack for one scene");
  std::string plan_corpus, plan_context, plan_pspm, plan_scene, plan_target;
  std::string plan_method = "zqa", plan_strategy = "per-pair-max", plan_out;
  int plan_victim = 0, plan_q = 6;
  bool plan_strict = false, plan_no_merge = false;
  std::uint64_t plan_seed = 1;
  double plan_overlap = 0.3;
  std::optional<double> plan_eta;
  plan->add_option("--corpus", plan_corpus, "JSON-Lines corpus")->required();
  plan->add_option("--context", plan_context, "context model file")->required();
  plan->add_option("--pspm", plan_pspm, "success table (zqa-pspm)");
  plan->add_option("--scene", plan_scene, "scene id")->required();
  plan->add_option("--victim", plan_victim, "victim object index");
  plan->add_option("--target", plan_target, "target label name")->required();
  plan->add_option("--method", plan_method, "agnostic | zqa | zqa-pspm | few-query");
  plan->add_flag("--strict-clique", plan_strict, "force fully connected planned labels");
  plan->add_option("--strategy", plan_strategy, "per-pair-max | max-average | max-min");
  plan->add_option("--q", plan_q, "few-query escalation budget");
  plan->add_option("--seed", plan_seed, "seed for sampled methods");
  plan->add_option("--eta", [&plan_eta](const std::vector<std::string>& v) {
    try {
      std::size_t pos = 0;
      plan_eta = std::stod(v[0], &pos);
      return pos == v[0].size();
    } catch (...) { return false; }
  }, "override the stored edge threshold")->expected(1);
  plan->add_option("--overlap-threshold", plan_overlap, "overlap merge threshold");
  plan->add_flag("--no-merge", plan_no_merge, "skip the overlap merge pass");
  plan->add_option("--out", plan_out, "write plan JSON here instead of stdout");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a configured experiment sweep");
  std::string sim_config, sim_out, sim_md, sim_dump;
  std::optional<int> sim_workers;
  std::optional<double> sim_eta;
  sim->add_option("--config", sim_config, "experiment config JSON")->required();
  sim->add_option("--out", sim_out, "CSV output path (default stdout)");
  sim->add_option("--markdown", sim_md, "also write a markdown table here");
  sim->add_option("--dump-trials", sim_dump, "write per-trial JSON-Lines here");
  sim->add_option("--workers", [&sim_workers](const std::vector<std::string>& v) {
    try {
      std::size_t pos = 0;
      sim_workers = std::stoi(v[0], &pos);
      return pos == v[0].size();
    } catch (...) { return false; }
  }, "worker threads")->expected(1);
  sim->add_option("--eta", [&sim_eta](const std::vector<std::string>& v) {
    try {
      std::size_t pos = 0;
      sim_eta = std::stod(v[0], &pos);
      return pos == v[0].size();
    } catch (...) { return false; }
  }, "override the context edge threshold")->expected(1);

  // pgd-demo
  auto* demo = app.add_subcommand("pgd-demo", "run one toy targeted attack");
  double demo_eps = 10, demo_lambda = 2, demo_jitter = 14.0;
  int demo_iter = 50, demo_target = 1, demo_source = 0, demo_classes = 8, demo_dim = 16,
      demo_hidden = 0;
  std::uint64_t demo_seed = 7;
  demo->add_option("--epsilon", demo_eps, "perturbation budget")->required();
  demo->add_option("--lambda", demo_lambda, "step size");
  demo->add_option("--max-iter", demo_iter, "iteration cap");
  demo->add_option("--target", demo_target, "target class")->required();
  demo->add_option("--source", demo_source, "source class whose anchor seeds the attack");
  demo->add_option("--classes", demo_classes, "number of classes");
  demo->add_option("--dim", demo_dim, "input dimension");
  demo->add_option("--hidden", demo_hidden, "hidden units (0 = linear)");
  demo->add_option("--seed", demo_seed, "seed");
  demo->add_option("--jitter", demo_jitter, "start point jitter");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_corpus(syn_cfg, gen_out, gen_labels_out);
    if (bctx->parsed()) return cmd_build_context(bctx_corpus, bctx_labels, bctx_eta, bctx_out);
    if (bpspm->parsed())
      return cmd_build_pspm(bpspm_labels, bpspm_context, bpspm_eps, bpspm_trials,
                            bpspm_seed, bpspm_ensemble, bpspm_hidden, bpspm_jitter,
                            bpspm_out);
    if (mkv->parsed())
      return cmd_make_victim(mkv_pspm, mkv_vanish, mkv_mislabel, mkv_id, mkv_out);
    if (dbb->parsed())
      return cmd_derive_blackbox(dbb_model, dbb_tau, dbb_noise, dbb_vanish_inc, dbb_seed,
                                 dbb_id, dbb_out);
    if (plan->parsed())
      return cmd_plan(plan_corpus, plan_context, plan_pspm, plan_scene, plan_victim,
                      plan_target, plan_method, plan_strict, plan_strategy, plan_q,
                      plan_seed, plan_eta, plan_overlap, plan_no_merge, plan_out);
    if (sim->parsed())
      return cmd_simulate(sim_config, sim_out, sim_md, sim_dump, sim_workers, sim_eta);
    if (demo->parsed())
      return cmd_pgd_demo(demo_eps, demo_lambda, demo_iter, demo_target, demo_source,
                          demo_classes, demo_dim, demo_hidden, demo_seed, demo_jitter);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
