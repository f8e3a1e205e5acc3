#include "ctxattack/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ctxattack/errors.hpp"
#include "json.hpp"

namespace ctxattack {

using nlohmann::json;

VictimPolicy parse_victim_policy(const std::string& name) {
  if (name == "uniform-random" || name == "UniformRandom") return VictimPolicy::UniformRandom;
  if (name == "largest-object" || name == "LargestObject") return VictimPolicy::LargestObject;
  throw std::invalid_argument("unknown victim selection policy: " + name);
}

std::string victim_policy_name(VictimPolicy p) {
  return p == VictimPolicy::UniformRandom ? "uniform-random" : "largest-object";
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
    return buf;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": JSON parse error: " + e.what());
  }

  ExperimentConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.corpus_path = j.at("corpus").get<std::string>();
  cfg.context_path = j.at("context_model").get<std::string>();
  if (j.contains("victim_context_model") && !j.at("victim_context_model").is_null())
    cfg.victim_context_path = j.at("victim_context_model").get<std::string>();

  if (j.contains("pspm"))
    for (const auto& [key, value] : j.at("pspm").items())
      cfg.pspm_paths[std::stod(key)] = value.get<std::string>();

  cfg.epsilons = j.at("epsilons").get<std::vector<double>>();
  if (cfg.epsilons.empty()) throw std::runtime_error(path + ": epsilons must be non-empty");

  for (const auto& m : j.at("methods"))
    cfg.methods.push_back(parse_method(m.get<std::string>()));
  if (cfg.methods.empty()) throw std::runtime_error(path + ": methods must be non-empty");

  cfg.max_q = j.value("max_q", 5);
  if (cfg.max_q < 0) throw std::runtime_error(path + ": max_q must be >= 0");

  if (!j.contains("victim_models") || j.at("victim_models").empty())
    throw std::runtime_error(path + ": victim_models must be non-empty");
  for (const auto& vm : j.at("victim_models")) {
    VictimModelCfg m;
    m.name = vm.at("name").get<std::string>();
    int sources = 0;
    if (vm.contains("file")) {
      m.file = vm.at("file").get<std::string>();
      ++sources;
    }
    if (vm.contains("files")) {
      for (const auto& [key, value] : vm.at("files").items())
        m.files[std::stod(key)] = value.get<std::string>();
      ++sources;
    }
    if (vm.contains("from_pspm")) {
      const auto& fp = vm.at("from_pspm");
      VictimModelCfg::FromPspm d;
      d.tau = fp.value("tau", 1.0);
      d.noise = fp.value("noise", 0.0);
      d.vanish_increase = fp.value("vanish_increase", 0.0);
      d.vanish_prob = fp.value("vanish_prob", 0.05);
      d.mislabel_prob = fp.value("mislabel_prob", 0.05);
      m.from_pspm = d;
      ++sources;
    }
    if (sources != 1)
      throw std::runtime_error(path + ": victim model '" + m.name +
                               "' needs exactly one of file/files/from_pspm");
    cfg.victim_models.push_back(std::move(m));
  }

  cfg.victim_selection =
      parse_victim_policy(j.value("victim_selection", std::string("uniform-random")));
  cfg.strict_clique = j.value("strict_clique", false);
  cfg.strategy = parse_strategy(j.value("strategy", std::string("per-pair-max")));
  cfg.trials = j.value("trials", 0);
  cfg.min_objects = j.value("min_objects", 2);
  cfg.max_objects = j.value("max_objects", 6);
  cfg.overlap_threshold = j.value("overlap_threshold", 0.3);
  if (j.contains("eta") && !j.at("eta").is_null())
    cfg.eta_override = j.at("eta").get<double>();
  cfg.threshold_on_conditional = j.value("threshold_on_conditional", false);
  cfg.workers = j.value("workers", 1);
  return cfg;
}

LoadedExperiment load_experiment(const ExperimentConfig& cfg) {
  LoadedExperiment exp;
  exp.seed = cfg.seed;

  const ContextModel attacker_ctx = load_context_model(cfg.context_path);
  Corpus corpus = load_corpus(cfg.corpus_path, attacker_ctx.labels);
  exp.labels = corpus.labels;

  exp.attacker_graph =
      make_graph(attacker_ctx, cfg.eta_override, cfg.threshold_on_conditional);
  if (cfg.victim_context_path) {
    const ContextModel victim_ctx = load_context_model(*cfg.victim_context_path);
    if (!(victim_ctx.labels == exp.labels))
      throw std::runtime_error("victim context model labels differ from corpus labels");
    exp.victim_graph =
        make_graph(victim_ctx, cfg.eta_override, cfg.threshold_on_conditional);
  } else {
    exp.victim_graph = exp.attacker_graph;
  }

  exp.scenes = filter_scenes(corpus.scenes, cfg.min_objects, cfg.max_objects);
  if (cfg.trials > 0 && static_cast<int>(exp.scenes.size()) > cfg.trials)
    exp.scenes.resize(cfg.trials);
  if (exp.scenes.empty()) throw std::runtime_error("no scenes eligible for the experiment");

  const bool needs_pspm =
      std::find(cfg.methods.begin(), cfg.methods.end(), PlanMethod::ZqaPspm) !=
          cfg.methods.end() ||
      std::any_of(cfg.victim_models.begin(), cfg.victim_models.end(),
                  [](const VictimModelCfg& m) { return m.from_pspm.has_value(); });
  for (double eps : cfg.epsilons) {
    auto it = cfg.pspm_paths.find(eps);
    if (it == cfg.pspm_paths.end()) {
      if (needs_pspm)
        throw std::runtime_error("no pspm file configured for epsilon " +
                                 format_number(eps));
      continue;
    }
    Pspm pspm = load_pspm(it->second);
    if (!(pspm.labels == exp.labels))
      throw std::runtime_error(it->second + ": pspm labels differ from corpus labels");
    exp.pspms.emplace(eps, std::move(pspm));
  }

  for (const VictimModelCfg& vm : cfg.victim_models) {
    std::map<double, TrueSuccessModel> per_eps;
    for (double eps : cfg.epsilons) {
      TrueSuccessModel model;
      if (vm.file) {
        model = load_model(*vm.file);
      } else if (!vm.files.empty()) {
        auto it = vm.files.find(eps);
        if (it == vm.files.end())
          throw std::runtime_error("victim model '" + vm.name +
                                   "' has no file for epsilon " + format_number(eps));
        model = load_model(it->second);
      } else {
        const auto& d = *vm.from_pspm;
        const Pspm& pspm = exp.pspms.at(eps);
        TrueSuccessModel wb = make_white_box(pspm, d.vanish_prob, d.mislabel_prob, vm.name);
        if (d.tau == 1.0 && d.noise == 0.0 && d.vanish_increase == 0.0) {
          model = std::move(wb);
        } else {
          Rng rng = derive_rng(cfg.seed,
                               {"derive-blackbox", vm.name, format_number(eps)});
          model = derive_blackbox(wb, d.tau, rng,
                                  {d.noise, d.vanish_increase}, vm.name);
        }
      }
      if (model.n() != exp.labels.size())
        throw std::runtime_error("victim model '" + vm.name +
                                 "' size does not match the label set");
      per_eps.emplace(eps, std::move(model));
    }
    exp.victim_models.emplace_back(vm.name, std::move(per_eps));
  }

  exp.epsilons = cfg.epsilons;
  exp.methods = cfg.methods;
  exp.max_q = cfg.max_q;
  exp.victim_selection = cfg.victim_selection;
  exp.strict_clique = cfg.strict_clique;
  exp.strategy = cfg.strategy;
  exp.overlap_threshold = cfg.overlap_threshold;
  exp.workers = cfg.workers;
  return exp;
}

std::vector<AttackGoal> select_victims(const std::vector<Scene>& scenes,
                                       const LabelSet& labels, const ContextGraph& graph,
                                       VictimPolicy policy, Rng& rng,
                                       std::vector<std::string>* skipped) {
  std::vector<AttackGoal> goals;
  std::vector<int> feasible;
  for (const Scene& scene : scenes) {
    if (scene.objects.empty()) {
      if (skipped) skipped->push_back(scene.scene_id + ": empty scene");
      continue;
    }
    int victim = 0;
    if (policy == VictimPolicy::UniformRandom) {
      victim = static_cast<int>(rng.index(scene.objects.size()));
    } else {
      for (int i = 1; i < scene.size(); ++i)
        if (scene.objects[i].bbox.area() > scene.objects[victim].bbox.area()) victim = i;
    }
    const int current = scene.objects[victim].label;
    feasible.clear();
    for (int lbl = 0; lbl < labels.size(); ++lbl) {
      if (lbl == current) continue;
      if (!consistent_targets(lbl, graph).empty()) feasible.push_back(lbl);
    }
    if (feasible.empty()) {
      if (skipped)
        skipped->push_back(scene.scene_id + ": no feasible target label");
      continue;
    }
    const int target = feasible[rng.index(feasible.size())];
    goals.push_back(make_attack_goal(scene, victim, target));
  }
  return goals;
}

const ResultCell& ResultTable::cell(const RowKey& row, const CellKey& col) const {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!(rows[r] == row)) continue;
    for (std::size_t c = 0; c < cols.size(); ++c)
      if (cols[c] == col) return cells[r][c];
  }
  throw std::out_of_range("ResultTable: no such cell");
}

namespace {

std::string rate_str(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", rate);
  return buf;
}

std::string row_label(const RowKey& row) {
  if (row.method == PlanMethod::FewQuery)
    return method_name(row.method) + " " + std::to_string(row.round);
  return method_name(row.method);
}

}  // namespace

std::string render_report(const ResultTable& table, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Csv) {
    out << "method,round,epsilon,model,fooling_rate,trials\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const RowKey& row = table.rows[r];
      for (std::size_t c = 0; c < table.cols.size(); ++c) {
        const CellKey& col = table.cols[c];
        const ResultCell& cell = table.cells[r][c];
        out << method_name(row.method) << ',' << row.round << ','
            << format_number(col.epsilon) << ',' << col.model << ','
            << rate_str(cell.rate()) << ',' << cell.trials << '\n';
      }
    }
    return out.str();
  }

  out << "| Method |";
  for (const CellKey& col : table.cols)
    out << " eps=" << format_number(col.epsilon) << ' ' << col.model << " |";
  out << "\n|---|";
  for (std::size_t c = 0; c < table.cols.size(); ++c) out << "---|";
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << "| " << row_label(table.rows[r]) << " |";
    for (std::size_t c = 0; c < table.cols.size(); ++c)
      out << ' ' << rate_str(table.cells[r][c].rate()) << " |";
    out << '\n';
  }
  return out.str();
}

std::string trial_to_json(const TrialDumpRecord& rec) {
  json j = {{"scene_id", rec.scene_id},
            {"method", method_name(rec.method)},
            {"round", rec.round},
            {"epsilon", rec.epsilon},
            {"model", rec.model},
            {"victim_index", rec.victim_index},
            {"target", rec.target_label},
            {"victim_hit", rec.victim_hit},
            {"success", rec.success}};
  if (!rec.planner_error.empty()) {
    j["planner_error"] = rec.planner_error;
  } else {
    json plan = json::array();
    for (const std::string& p : rec.plan)
      plan.push_back(p.empty() ? json(nullptr) : json(p));
    json outcomes = json::array();
    for (const std::string& o : rec.outcomes)
      outcomes.push_back(o.empty() ? json(nullptr) : json(o));
    j["plan"] = std::move(plan);
    j["outcomes"] = std::move(outcomes);
    j["clean"] = rec.clean;
    if (!rec.clean) j["witness"] = {rec.witness_a, rec.witness_b};
  }
  return j.dump();
}

namespace {

// All rows produced by one (goal, method, epsilon) task: per victim model,
// the success flag per feedback round (single round outside FewQuery).
struct TaskResult {
  std::vector<std::vector<std::uint8_t>> success;  // [model][round]
  std::vector<TrialDumpRecord> dump;
};

struct TaskContext {
  const LoadedExperiment& exp;
  bool collect_trials;
};

std::string label_or_empty(const LabelSet& labels, const DetectionOutcome& o) {
  return o.detected ? labels.name(o.label) : std::string();
}

TrialDumpRecord base_record(const TaskContext& ctx, const AttackGoal& goal,
                            PlanMethod method, int round, double eps,
                            const std::string& model_name) {
  TrialDumpRecord rec;
  rec.scene_id = goal.scene.scene_id;
  rec.method = method;
  rec.round = round;
  rec.epsilon = eps;
  rec.model = model_name;
  rec.victim_index = goal.victim_index;
  rec.target_label = ctx.exp.labels.name(goal.target_label);
  return rec;
}

void record_outcome(TrialDumpRecord& rec, const TaskContext& ctx, const AttackPlan& plan,
                    const TrialOutcome& outcome) {
  const LabelSet& labels = ctx.exp.labels;
  rec.plan.clear();
  for (const Directive& d : plan.directives)
    rec.plan.push_back(d.perturb ? labels.name(d.target_label) : std::string());
  rec.outcomes.clear();
  for (const DetectionOutcome& o : outcome.detection.outcomes)
    rec.outcomes.push_back(label_or_empty(labels, o));
  rec.clean = outcome.verdict.clean;
  if (!outcome.verdict.clean) {
    rec.witness_a = labels.name(outcome.verdict.witness_a);
    rec.witness_b = labels.name(outcome.verdict.witness_b);
  }
  rec.victim_hit = outcome.victim_hit;
  rec.success = outcome.success;
}

TaskResult run_task(const TaskContext& ctx, const AttackGoal& goal, PlanMethod method,
                    double eps) {
  const LoadedExperiment& exp = ctx.exp;
  const std::string& method_key = method_name(method);
  const std::string eps_key = format_number(eps);
  const int rounds = method == PlanMethod::FewQuery ? exp.max_q + 1 : 1;

  TaskResult result;
  result.success.resize(exp.victim_models.size());
  for (auto& per_model : result.success) per_model.assign(rounds, 0);

  // The plan (or escalation chain) is drawn once per epsilon and shared by
  // every victim model, like one attacked image shown to several detectors.
  std::vector<AttackPlan> plans;
  std::string planner_error;
  try {
    switch (method) {
      case PlanMethod::ContextAgnostic: {
        Rng rng = derive_rng(exp.seed,
                             {goal.scene.scene_id, method_key, eps_key, "plan"});
        plans.push_back(plan_context_agnostic(goal, exp.labels, rng));
        break;
      }
      case PlanMethod::Zqa: {
        Rng rng = derive_rng(exp.seed,
                             {goal.scene.scene_id, method_key, eps_key, "plan"});
        plans.push_back(plan_zero_query_uniform(goal, exp.attacker_graph, rng));
        break;
      }
      case PlanMethod::ZqaPspm: {
        plans.push_back(plan_zero_query(goal, exp.attacker_graph, exp.pspms.at(eps),
                                        exp.strategy, exp.strict_clique));
        break;
      }
      case PlanMethod::FewQuery: {
        Rng rng = derive_rng(exp.seed,
                             {goal.scene.scene_id, method_key, eps_key, "plan"});
        const int q = std::min(exp.max_q + 1, goal.scene.size());
        FewQuerySequence seq = plan_few_query(goal, exp.attacker_graph, q, rng);
        plans = std::move(seq.plans);
        break;
      }
    }
    for (AttackPlan& plan : plans)
      plan = apply_overlap_merge(std::move(plan), goal, exp.overlap_threshold);
  } catch (const NoFeasibleTargetError& e) {
    planner_error = e.what();
  }

  for (std::size_t m = 0; m < exp.victim_models.size(); ++m) {
    const auto& [model_name, per_eps] = exp.victim_models[m];
    if (!planner_error.empty()) {
      // no plan: the attack never fires, every round is a failed trial
      if (ctx.collect_trials) {
        TrialDumpRecord rec = base_record(ctx, goal, method, 0, eps, model_name);
        rec.planner_error = planner_error;
        result.dump.push_back(std::move(rec));
      }
      continue;
    }
    const TrueSuccessModel& model = per_eps.at(eps);
    bool achieved = false;
    for (int round = 0; round < rounds; ++round) {
      if (!achieved && round < static_cast<int>(plans.size())) {
        Rng rng = derive_rng(exp.seed, {goal.scene.scene_id, method_key, eps_key,
                                        model_name, std::to_string(round), "exec"});
        const PerturbedDetection det =
            oracle_execute(plans[round], goal.scene, model, rng);
        const TrialOutcome outcome = score_trial(goal, det, exp.victim_graph);
        if (ctx.collect_trials) {
          TrialDumpRecord rec =
              base_record(ctx, goal, method, plans[round].round, eps, model_name);
          record_outcome(rec, ctx, plans[round], outcome);
          result.dump.push_back(std::move(rec));
        }
        if (outcome.success) achieved = true;  // one-bit feedback: stop here
      }
      result.success[m][round] = achieved ? 1 : 0;
    }
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const LoadedExperiment& exp, bool collect_trials) {
  if (exp.scenes.empty()) throw std::invalid_argument("run_experiment: no scenes");
  if (exp.epsilons.empty() || exp.methods.empty() || exp.victim_models.empty())
    throw std::invalid_argument("run_experiment: empty sweep axes");

  Rng victim_rng = derive_rng(exp.seed, {"select-victims"});
  std::vector<std::string> skipped;
  const std::vector<AttackGoal> goals =
      select_victims(exp.scenes, exp.labels, exp.attacker_graph, exp.victim_selection,
                     victim_rng, &skipped);
  if (goals.empty()) throw std::runtime_error("run_experiment: every scene was skipped");

  ExperimentResult result;
  for (const std::string& s : skipped) result.notes.push_back("skipped " + s);

  for (PlanMethod method : exp.methods) {
    const int rounds = method == PlanMethod::FewQuery ? exp.max_q + 1 : 1;
    for (int round = 0; round < rounds; ++round)
      result.table.rows.push_back({method, round});
  }
  for (double eps : exp.epsilons)
    for (const auto& [model_name, per_eps] : exp.victim_models)
      result.table.cols.push_back({eps, model_name});
  result.table.cells.assign(result.table.rows.size(),
                            std::vector<ResultCell>(result.table.cols.size()));

  struct Task {
    std::size_t goal;
    std::size_t method;
    std::size_t eps;
  };
  std::vector<Task> tasks;
  tasks.reserve(goals.size() * exp.methods.size() * exp.epsilons.size());
  for (std::size_t g = 0; g < goals.size(); ++g)
    for (std::size_t m = 0; m < exp.methods.size(); ++m)
      for (std::size_t e = 0; e < exp.epsilons.size(); ++e) tasks.push_back({g, m, e});

  const TaskContext ctx{exp, collect_trials};
  std::vector<TaskResult> outputs(tasks.size());

  const int workers = std::max(1, exp.workers);
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const Task& task = tasks[t];
      outputs[t] = run_task(ctx, goals[task.goal], exp.methods[task.method],
                            exp.epsilons[task.eps]);
    }
  } else {
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t t = cursor.fetch_add(1);
        if (t >= tasks.size()) return;
        const Task& task = tasks[t];
        outputs[t] = run_task(ctx, goals[task.goal], exp.methods[task.method],
                              exp.epsilons[task.eps]);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // row index of (method, round 0) per method position
  std::vector<std::size_t> row_base(exp.methods.size());
  {
    std::size_t r = 0;
    for (std::size_t m = 0; m < exp.methods.size(); ++m) {
      row_base[m] = r;
      r += exp.methods[m] == PlanMethod::FewQuery ? exp.max_q + 1 : 1;
    }
  }

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    const TaskResult& out = outputs[t];
    for (std::size_t m = 0; m < exp.victim_models.size(); ++m) {
      const std::size_t col = task.eps * exp.victim_models.size() + m;
      for (std::size_t round = 0; round < out.success[m].size(); ++round) {
        ResultCell& cell = result.table.cells[row_base[task.method] + round][col];
        cell.trials += 1;
        cell.successes += out.success[m][round];
      }
    }
    if (collect_trials)
      for (const TrialDumpRecord& rec : out.dump) result.trials.push_back(rec);
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool collect_trials) {
  return run_experiment(load_experiment(cfg), collect_trials);
}

}  // namespace ctxattack
