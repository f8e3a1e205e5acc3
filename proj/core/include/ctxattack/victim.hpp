#pragma once

#include <span>
#include <vector>

#include "ctxattack/context_model.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"

namespace ctxattack {

// Clean, or suspected with the lexicographically smallest disconnected
// label pair (a < b) as witness.
struct DefenseVerdict {
  bool clean = true;
  int witness_a = -1;
  int witness_b = -1;

  bool operator==(const DefenseVerdict&) const = default;
};

// Consistency check over the labels that were actually detected; vanished
// objects carry no label and are skipped.
DefenseVerdict defend(const PerturbedDetection& detection, const ContextGraph& graph);

struct TrialOutcome {
  PerturbedDetection detection;
  DefenseVerdict verdict;
  bool victim_hit = false;  // victim detected with the goal's target label
  bool success = false;     // victim_hit and verdict clean
};

TrialOutcome score_trial(const AttackGoal& goal, const PerturbedDetection& detection,
                         const ContextGraph& victim_graph);

// Percentage of successful trials; rejects an empty list.
double fooling_rate(std::span<const TrialOutcome> outcomes);

}  // namespace ctxattack
