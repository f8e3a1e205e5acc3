#include "ctxattack/planner.hpp"

#include <algorithm>
#include <stdexcept>

#include "ctxattack/errors.hpp"
#include "json.hpp"

namespace ctxattack {

AttackGoal make_attack_goal(const Scene& scene, int victim_index, int target_label) {
  if (victim_index < 0 || victim_index >= scene.size())
    throw std::invalid_argument("attack goal: victim index " +
                                std::to_string(victim_index) + " out of range in scene '" +
                                scene.scene_id + "'");
  if (target_label < 0)
    throw std::invalid_argument("attack goal: negative target label");
  if (scene.objects[victim_index].label == target_label)
    throw std::invalid_argument("attack goal: victim in scene '" + scene.scene_id +
                                "' already carries the target label");
  return AttackGoal{scene, victim_index, target_label};
}

std::string method_name(PlanMethod m) {
  switch (m) {
    case PlanMethod::ContextAgnostic: return "ContextAgnostic";
    case PlanMethod::Zqa: return "ZQA";
    case PlanMethod::ZqaPspm: return "ZQA-PSPM";
    case PlanMethod::FewQuery: return "FewQuery";
  }
  return "?";
}

PlanMethod parse_method(const std::string& name) {
  if (name == "ContextAgnostic" || name == "context-agnostic" || name == "agnostic")
    return PlanMethod::ContextAgnostic;
  if (name == "ZQA" || name == "zqa") return PlanMethod::Zqa;
  if (name == "ZQA-PSPM" || name == "zqa-pspm") return PlanMethod::ZqaPspm;
  if (name == "FewQuery" || name == "few-query") return PlanMethod::FewQuery;
  throw std::invalid_argument("unknown attack method: " + name);
}

namespace {

std::vector<int> pool_for(const AttackGoal& goal, const ContextGraph& graph,
                          bool require_nonempty) {
  std::vector<int> pool = consistent_targets(goal.target_label, graph);
  if (require_nonempty && pool.empty() && goal.scene.size() > 1)
    throw NoFeasibleTargetError(goal.victim_index,
                                "no label co-occurs with the target in scene '" +
                                    goal.scene.scene_id + "'");
  return pool;
}

}  // namespace

AttackPlan plan_zero_query(const AttackGoal& goal, const ContextGraph& graph,
                           const Pspm& pspm, SelectionStrategy strategy,
                           bool strict_clique) {
  const Scene& scene = goal.scene;
  if (goal.target_label >= graph.n() || goal.target_label >= pspm.n())
    throw std::out_of_range("plan_zero_query: target label out of range");
  const std::vector<int> pool = pool_for(goal, graph, true);

  AttackPlan plan;
  plan.method = PlanMethod::ZqaPspm;
  plan.directives.assign(scene.size(), Directive::unchanged());
  plan.directives[goal.victim_index] = Directive::to(goal.target_label);
  if (scene.size() == 1) return plan;

  std::vector<int> helpers;
  std::vector<int> helper_labels;
  for (int i = 0; i < scene.size(); ++i) {
    if (i == goal.victim_index) continue;
    helpers.push_back(i);
    helper_labels.push_back(scene.objects[i].label);
  }

  std::vector<int> chosen;
  if (!strict_clique) {
    const std::vector<std::vector<int>> candidates(helpers.size(), pool);
    chosen = select_assignment(helper_labels, candidates, pspm, strategy);
  } else if (strategy == SelectionStrategy::PerPairMax) {
    // Greedy: each helper picks its best pool label still forming a clique
    // with everything chosen so far.
    std::vector<int> committed{goal.target_label};
    for (std::size_t k = 0; k < helpers.size(); ++k) {
      int best = -1;
      double best_p = -1;
      for (int cand : pool) {
        bool ok = true;
        for (int prev : committed)
          if (prev != cand && !graph.edge(prev, cand)) {
            ok = false;
            break;
          }
        if (!ok) continue;
        const double p = pspm.effective(helper_labels[k], cand);
        if (p > best_p) {
          best_p = p;
          best = cand;
        }
      }
      if (best < 0)
        throw NoFeasibleTargetError(
            helpers[k], "strict clique left no label for object " +
                            std::to_string(helpers[k]) + " in scene '" +
                            scene.scene_id + "'");
      chosen.push_back(best);
      committed.push_back(best);
    }
  } else {
    const std::vector<std::vector<int>> candidates(helpers.size(), pool);
    std::vector<int> full(helpers.size() + 1);
    auto clique_with_target = [&](std::span<const int> assignment) {
      full[0] = goal.target_label;
      std::copy(assignment.begin(), assignment.end(), full.begin() + 1);
      return is_context_consistent(
          std::span<const int>(full.data(), assignment.size() + 1), graph);
    };
    chosen = select_assignment(helper_labels, candidates, pspm, strategy,
                               clique_with_target);
  }

  for (std::size_t k = 0; k < helpers.size(); ++k)
    plan.directives[helpers[k]] = Directive::to(chosen[k]);
  return plan;
}

std::vector<int> helper_order(const Scene& scene, int victim_index) {
  std::vector<int> order;
  for (int i = 0; i < scene.size(); ++i)
    if (i != victim_index) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scene.objects[a].bbox.area() > scene.objects[b].bbox.area();
  });
  return order;
}

FewQuerySequence plan_few_query(const AttackGoal& goal, const ContextGraph& graph,
                                int q, Rng& rng) {
  const Scene& scene = goal.scene;
  if (q < 1 || q > scene.size())
    throw std::invalid_argument("plan_few_query: q must lie in [1, scene size]");
  if (goal.target_label >= graph.n())
    throw std::out_of_range("plan_few_query: target label out of range");

  std::vector<int> pool = consistent_targets(goal.target_label, graph);
  if (pool.empty() && q > 1)
    throw NoFeasibleTargetError(goal.victim_index,
                                "no label co-occurs with the target in scene '" +
                                    scene.scene_id + "'");

  const std::vector<int> order = helper_order(scene, goal.victim_index);

  FewQuerySequence seq;
  AttackPlan plan;
  plan.method = PlanMethod::FewQuery;
  plan.directives.assign(scene.size(), Directive::unchanged());
  plan.directives[goal.victim_index] = Directive::to(goal.target_label);
  plan.round = 0;
  seq.plans.push_back(plan);

  for (int k = 1; k < q; ++k) {
    const int helper = order[k - 1];
    plan.directives[helper] = Directive::to(pool[rng.index(pool.size())]);
    plan.round = k;
    seq.plans.push_back(plan);
  }
  return seq;
}

AttackPlan plan_zero_query_uniform(const AttackGoal& goal, const ContextGraph& graph,
                                   Rng& rng) {
  FewQuerySequence seq = plan_few_query(goal, graph, goal.scene.size(), rng);
  AttackPlan plan = std::move(seq.plans.back());
  plan.method = PlanMethod::Zqa;
  plan.round = 0;
  return plan;
}

AttackPlan plan_context_agnostic(const AttackGoal& goal, const LabelSet& labels,
                                 Rng& rng) {
  const Scene& scene = goal.scene;
  const int n = labels.size();
  AttackPlan plan;
  plan.method = PlanMethod::ContextAgnostic;
  plan.directives.assign(scene.size(), Directive::unchanged());
  plan.directives[goal.victim_index] = Directive::to(goal.target_label);
  for (int i = 0; i < scene.size(); ++i) {
    if (i == goal.victim_index) continue;
    const int current = scene.objects[i].label;
    // uniform over the other n-1 labels
    int draw = static_cast<int>(rng.index(static_cast<std::size_t>(n - 1)));
    if (draw >= current) ++draw;
    plan.directives[i] = Directive::to(draw);
  }
  return plan;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

AttackPlan apply_overlap_merge(AttackPlan plan, const AttackGoal& goal, double threshold) {
  const Scene& scene = goal.scene;
  if (static_cast<int>(plan.directives.size()) != scene.size())
    throw std::invalid_argument("apply_overlap_merge: plan does not match scene");
  const BoundingBox& victim_box = scene.objects[goal.victim_index].bbox;
  for (int i = 0; i < scene.size(); ++i) {
    if (i == goal.victim_index) continue;
    if (iou(scene.objects[i].bbox, victim_box) >= threshold)
      plan.directives[i] = Directive::to(goal.target_label);
  }
  return plan;
}

std::string plan_to_json(const AttackPlan& plan, const AttackGoal& goal,
                         const LabelSet& labels) {
  nlohmann::json dirs = nlohmann::json::array();
  for (const Directive& d : plan.directives) {
    if (d.perturb)
      dirs.push_back({{"action", "perturb"}, {"to", labels.name(d.target_label)}});
    else
      dirs.push_back({{"action", "unchanged"}});
  }
  nlohmann::json j = {{"scene_id", goal.scene.scene_id},
                      {"method", method_name(plan.method)},
                      {"round", plan.round},
                      {"victim_index", goal.victim_index},
                      {"target", labels.name(goal.target_label)},
                      {"directives", std::move(dirs)}};
  return j.dump(2);
}

}  // namespace ctxattack
