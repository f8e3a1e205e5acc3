#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxattack/context_model.hpp"
#include "ctxattack/corpus.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/pspm.hpp"
#include "ctxattack/victim.hpp"

namespace ctxattack {

enum class VictimPolicy { UniformRandom, LargestObject };

VictimPolicy parse_victim_policy(const std::string& name);
std::string victim_policy_name(VictimPolicy p);

// How a named victim model is materialized per epsilon: a single file used
// for every epsilon, one file per epsilon, or derived from the attacker's
// success table at that epsilon (tau = 1 reproduces it; tau < 1 plus noise
// yields a degraded transfer surrogate).
struct VictimModelCfg {
  std::string name;
  std::optional<std::string> file;
  std::map<double, std::string> files;
  struct FromPspm {
    double tau = 1.0;
    double noise = 0.0;
    double vanish_increase = 0.0;
    double vanish_prob = 0.05;
    double mislabel_prob = 0.05;
  };
  std::optional<FromPspm> from_pspm;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string corpus_path;
  std::string context_path;
  std::optional<std::string> victim_context_path;
  std::map<double, std::string> pspm_paths;  // keyed by epsilon
  std::vector<double> epsilons;
  std::vector<PlanMethod> methods;
  int max_q = 5;
  std::vector<VictimModelCfg> victim_models;
  VictimPolicy victim_selection = VictimPolicy::UniformRandom;
  bool strict_clique = false;
  SelectionStrategy strategy = SelectionStrategy::PerPairMax;
  int trials = 0;  // scene budget; 0 = every eligible scene
  int min_objects = 2;
  int max_objects = 6;
  double overlap_threshold = 0.3;
  std::optional<double> eta_override;
  bool threshold_on_conditional = false;
  int workers = 1;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct RowKey {
  PlanMethod method = PlanMethod::Zqa;
  int round = 0;  // 0 except the FewQuery escalation rows

  bool operator==(const RowKey&) const = default;
};

struct CellKey {
  double epsilon = 0;
  std::string model;

  bool operator==(const CellKey&) const = default;
};

struct ResultCell {
  std::int64_t successes = 0;
  std::int64_t trials = 0;

  double rate() const { return trials ? 100.0 * static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

// FewQuery rows are cumulative: round k counts trials that succeeded using
// at most k feedback bits, so rates never decrease down the rounds.
struct ResultTable {
  std::vector<RowKey> rows;
  std::vector<CellKey> cols;
  std::vector<std::vector<ResultCell>> cells;  // [row][col]

  const ResultCell& cell(const RowKey& row, const CellKey& col) const;
};

enum class ReportFormat { Csv, Markdown };

// Csv: "method,round,epsilon,model,fooling_rate,trials", rates to one
// decimal. Markdown: methods as rows, (epsilon, model) column pairs.
std::string render_report(const ResultTable& table, ReportFormat format);

struct TrialDumpRecord {
  std::string scene_id;
  PlanMethod method = PlanMethod::Zqa;
  int round = 0;
  double epsilon = 0;
  std::string model;
  int victim_index = 0;
  std::string target_label;
  std::string planner_error;  // empty when a plan was produced
  std::vector<std::string> plan;      // per object: label name or "" (unchanged)
  std::vector<std::string> outcomes;  // per object: label name or "" (vanished)
  bool clean = false;
  std::string witness_a, witness_b;
  bool victim_hit = false;
  bool success = false;
};

std::string trial_to_json(const TrialDumpRecord& rec);

struct ExperimentResult {
  ResultTable table;
  std::vector<TrialDumpRecord> trials;  // populated when collect_trials set
  std::vector<std::string> notes;       // skipped scenes etc.
};

// Everything run_experiment needs, already in memory. pspms/victim models
// are keyed per configured epsilon.
struct LoadedExperiment {
  std::uint64_t seed = 1;
  LabelSet labels;
  std::vector<Scene> scenes;
  ContextGraph attacker_graph;
  ContextGraph victim_graph;
  std::map<double, Pspm> pspms;
  std::vector<std::pair<std::string, std::map<double, TrueSuccessModel>>> victim_models;
  std::vector<double> epsilons;
  std::vector<PlanMethod> methods;
  int max_q = 5;
  VictimPolicy victim_selection = VictimPolicy::UniformRandom;
  bool strict_clique = false;
  SelectionStrategy strategy = SelectionStrategy::PerPairMax;
  double overlap_threshold = 0.3;
  int workers = 1;
};

LoadedExperiment load_experiment(const ExperimentConfig& cfg);

// One goal per scene: victim object by policy, target drawn uniformly from
// labels that differ from the victim's and have a non-empty consistent
// pool. Scenes with no such label are dropped and noted in `skipped`.
std::vector<AttackGoal> select_victims(const std::vector<Scene>& scenes,
                                       const LabelSet& labels,
                                       const ContextGraph& graph,
                                       VictimPolicy policy, Rng& rng,
                                       std::vector<std::string>* skipped = nullptr);

// Per-trial random streams hang off (seed, scene, method, epsilon, model,
// round), so results are identical for any worker count or schedule.
ExperimentResult run_experiment(const LoadedExperiment& exp, bool collect_trials = false);
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool collect_trials = false);

std::string format_number(double v);  // "10" for integral values, "%g" otherwise

}  // namespace ctxattack
