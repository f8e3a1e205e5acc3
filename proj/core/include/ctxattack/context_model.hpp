#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxattack/corpus.hpp"
#include "ctxattack/square_matrix.hpp"

namespace ctxattack {

// Symmetric scene-level co-occurrence counts. A scene contributes 1 to
// (i,j) and (j,i) for each unordered pair of distinct labels it contains;
// the diagonal (i,i) counts scenes holding two or more instances of i.
struct CooccurrenceCounts {
  SquareMatrix<std::int64_t> counts;

  int n() const { return counts.n(); }
};

// Row-normalized counts; rows with an all-zero count row stay all-zero.
struct ConditionalCooccurrence {
  SquareMatrix<double> probs;
  std::vector<std::int64_t> row_totals;

  int n() const { return probs.n(); }
};

// Thresholded graph: edge(i,j) iff the retained weight exceeded eta
// (strict). weights keeps the pre-threshold values for inspection.
struct ContextGraph {
  double eta = 0;
  SquareMatrix<std::uint8_t> adjacency;
  SquareMatrix<double> weights;

  int n() const { return adjacency.n(); }
  bool edge(int i, int j) const { return adjacency.at(i, j) != 0; }
};

CooccurrenceCounts build_counts(const std::vector<Scene>& scenes, const LabelSet& labels);
ConditionalCooccurrence normalize(const CooccurrenceCounts& counts);
ContextGraph threshold(const CooccurrenceCounts& counts, double eta);
ContextGraph threshold_conditional(const ConditionalCooccurrence& cond, double eta);

// True iff every pair of distinct labels in the list is connected.
// Empty and singleton lists pass; repeated labels add no self-edge demand.
bool is_context_consistent(std::span<const int> labels, const ContextGraph& graph);

// Labels that can appear next to `target`: the neighbors of target, plus
// target itself when the graph has a (target,target) self-edge. Ascending.
std::vector<int> consistent_targets(int target, const ContextGraph& graph);

// Counts + conditional + the eta they were built with, as persisted to disk:
//   {"labels": [...], "eta": e, "counts": [[...]], "conditional": [[...]]}
struct ContextModel {
  LabelSet labels;
  CooccurrenceCounts counts;
  ConditionalCooccurrence conditional;
  double eta = 0;
};

ContextModel build_context_model(const Corpus& corpus, double eta = 0);
void save_context_model(const std::string& path, const ContextModel& model);
ContextModel load_context_model(const std::string& path);

ContextGraph make_graph(const ContextModel& model,
                        std::optional<double> eta_override = std::nullopt,
                        bool threshold_on_conditional = false);

}  // namespace ctxattack
