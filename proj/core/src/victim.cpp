#include "ctxattack/victim.hpp"

#include <algorithm>
#include <stdexcept>

namespace ctxattack {

DefenseVerdict defend(const PerturbedDetection& detection, const ContextGraph& graph) {
  std::vector<int> labels;
  for (const DetectionOutcome& o : detection.outcomes) {
    if (!o.detected) continue;  // vanished objects carry no label
    if (o.label < 0 || o.label >= graph.n())
      throw std::out_of_range("defend: detected label out of range");
    labels.push_back(o.label);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t b = a + 1; b < labels.size(); ++b)
      if (!graph.edge(labels[a], labels[b]))
        return DefenseVerdict{false, labels[a], labels[b]};
  return DefenseVerdict{};
}

TrialOutcome score_trial(const AttackGoal& goal, const PerturbedDetection& detection,
                         const ContextGraph& victim_graph) {
  if (detection.outcomes.size() != goal.scene.objects.size())
    throw std::invalid_argument("score_trial: detection does not match scene");
  TrialOutcome out;
  out.detection = detection;
  out.verdict = defend(detection, victim_graph);
  const DetectionOutcome& victim = detection.outcomes[goal.victim_index];
  out.victim_hit = victim.detected && victim.label == goal.target_label;
  out.success = out.victim_hit && out.verdict.clean;
  return out;
}

double fooling_rate(std::span<const TrialOutcome> outcomes) {
  if (outcomes.empty())
    throw std::invalid_argument("fooling_rate: empty outcome list");
  std::size_t successes = 0;
  for (const TrialOutcome& o : outcomes) successes += o.success ? 1 : 0;
  return 100.0 * static_cast<double>(successes) / static_cast<double>(outcomes.size());
}

}  // namespace ctxattack
