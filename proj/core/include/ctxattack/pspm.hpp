#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctxattack/corpus.hpp"
#include "ctxattack/square_matrix.hpp"

namespace ctxattack {

struct TrialRecord {
  int victim_label = 0;
  int target_label = 0;
  bool success = false;
};

struct TrialLog {
  std::vector<TrialRecord> records;
};

// Empirical success rates of perturbing label i into label j for one
// (ensemble, epsilon, algorithm) setting. Entries with zero trials are
// unknown and score as 0 during selection.
struct Pspm {
  LabelSet labels;
  std::string ensemble_id;
  double epsilon = 0;
  std::string algorithm_id;
  SquareMatrix<double> probs;
  SquareMatrix<std::int64_t> trials;

  int n() const { return probs.n(); }
  bool known(int i, int j) const { return trials.at(i, j) > 0; }
  double effective(int i, int j) const { return known(i, j) ? probs.at(i, j) : 0.0; }
};

Pspm estimate_pspm(const TrialLog& log, const LabelSet& labels,
                   const std::string& ensemble_id, double epsilon,
                   const std::string& algorithm_id);

enum class SelectionStrategy { PerPairMax, MaxAverage, MaxMin };

SelectionStrategy parse_strategy(const std::string& name);
std::string strategy_name(SelectionStrategy s);

// Joint search is exhaustive while the assignment space stays at or under
// this; beyond it the coupled strategies fall back to per-object greedy.
inline constexpr std::uint64_t kJointSearchLimit = 1'000'000;

struct SelectionDiagnostics {
  std::uint64_t joint_space = 0;
  bool used_greedy_fallback = false;
};

// One chosen label per object, candidates[k] being object k's allowed pool.
// PerPairMax picks each object's argmax independently. MaxAverage orders
// assignments by (mean, lexicographic labels); MaxMin by (min, mean,
// lexicographic labels) so that uncoupled instances agree with PerPairMax.
// The `feasible` overload drops whole assignments the predicate rejects.
std::vector<int> select_assignment(std::span<const int> victim_labels,
                                   const std::vector<std::vector<int>>& candidates,
                                   const Pspm& pspm, SelectionStrategy strategy,
                                   SelectionDiagnostics* diag = nullptr);
std::vector<int> select_assignment(std::span<const int> victim_labels,
                                   const std::vector<std::vector<int>>& candidates,
                                   const Pspm& pspm, SelectionStrategy strategy,
                                   const std::function<bool(std::span<const int>)>& feasible,
                                   SelectionDiagnostics* diag = nullptr);

// {"labels": [...], "ensemble": "...", "epsilon": e, "algorithm": "...",
//  "probs": [[...]], "trials": [[...]]}
void save_pspm(const std::string& path, const Pspm& pspm);
Pspm load_pspm(const std::string& path);

}  // namespace ctxattack
