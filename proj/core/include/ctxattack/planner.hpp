#pragma once

#include <string>
#include <vector>

#include "ctxattack/context_model.hpp"
#include "ctxattack/corpus.hpp"
#include "ctxattack/pspm.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

// A victim object inside a scene plus the label it should end up carrying.
// Construction rejects goals whose victim already bears the target label.
struct AttackGoal {
  Scene scene;
  int victim_index = 0;
  int target_label = 0;
};

AttackGoal make_attack_goal(const Scene& scene, int victim_index, int target_label);

struct Directive {
  bool perturb = false;
  int target_label = -1;

  static Directive unchanged() { return {false, -1}; }
  static Directive to(int label) { return {true, label}; }

  bool operator==(const Directive&) const = default;
};

enum class PlanMethod { ContextAgnostic, Zqa, ZqaPspm, FewQuery };

std::string method_name(PlanMethod m);
PlanMethod parse_method(const std::string& name);

struct AttackPlan {
  std::vector<Directive> directives;  // one per scene object
  PlanMethod method = PlanMethod::Zqa;
  int round = 0;  // feedback rounds the plan builds on; 0 outside FewQuery
};

struct FewQuerySequence {
  std::vector<AttackPlan> plans;  // plans[k] builds on k feedback rounds
};

// Victim -> target; every helper -> its best-scoring member of the
// target's consistent pool under `strategy`. strict_clique additionally
// forces the full planned label list into a clique (greedy for
// PerPairMax, constrained joint search otherwise).
AttackPlan plan_zero_query(const AttackGoal& goal, const ContextGraph& graph,
                           const Pspm& pspm, SelectionStrategy strategy,
                           bool strict_clique = false);

// Victim -> target; every helper label drawn uniformly from the target's
// consistent pool. Same sampler the few-query escalation uses.
AttackPlan plan_zero_query_uniform(const AttackGoal& goal, const ContextGraph& graph,
                                   Rng& rng);

// Escalation chain D_1..D_q: D_1 perturbs the victim alone, each later
// plan adds the next-largest untouched helper with a fresh uniform draw
// from the consistent pool. 1 <= q <= scene size.
FewQuerySequence plan_few_query(const AttackGoal& goal, const ContextGraph& graph,
                                int q, Rng& rng);

// Victim -> target; every helper -> a uniformly drawn label other than its
// current one. No context model consulted.
AttackPlan plan_context_agnostic(const AttackGoal& goal, const LabelSet& labels,
                                 Rng& rng);

// Helper indices (victim excluded) in descending bbox area, ties by
// position in the scene.
std::vector<int> helper_order(const Scene& scene, int victim_index);

double iou(const BoundingBox& a, const BoundingBox& b);

// Helpers overlapping the victim box at iou >= threshold get rewritten to
// the victim's target label. Idempotent.
AttackPlan apply_overlap_merge(AttackPlan plan, const AttackGoal& goal,
                               double threshold = 0.3);

// {"scene_id": ..., "method": ..., "round": r, "directives": [
//   {"action": "perturb", "to": "<label>"} | {"action": "unchanged"}, ...]}
std::string plan_to_json(const AttackPlan& plan, const AttackGoal& goal,
                         const LabelSet& labels);

}  // namespace ctxattack
