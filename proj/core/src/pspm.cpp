#include "ctxattack/pspm.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ctxattack/errors.hpp"
#include "json.hpp"

namespace ctxattack {

using nlohmann::json;

Pspm estimate_pspm(const TrialLog& log, const LabelSet& labels,
                   const std::string& ensemble_id, double epsilon,
                   const std::string& algorithm_id) {
  const int n = labels.size();
  Pspm pspm{labels,
            ensemble_id,
            epsilon,
            algorithm_id,
            SquareMatrix<double>(n),
            SquareMatrix<std::int64_t>(n)};
  SquareMatrix<std::int64_t> successes(n);
  for (const TrialRecord& rec : log.records) {
    if (rec.victim_label < 0 || rec.victim_label >= n || rec.target_label < 0 ||
        rec.target_label >= n)
      throw std::out_of_range("estimate_pspm: trial label index out of range");
    pspm.trials.at(rec.victim_label, rec.target_label) += 1;
    if (rec.success) successes.at(rec.victim_label, rec.target_label) += 1;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (pspm.trials.at(i, j) > 0)
        pspm.probs.at(i, j) = static_cast<double>(successes.at(i, j)) /
                              static_cast<double>(pspm.trials.at(i, j));
  return pspm;
}

SelectionStrategy parse_strategy(const std::string& name) {
  if (name == "per-pair-max" || name == "PerPairMax") return SelectionStrategy::PerPairMax;
  if (name == "max-average" || name == "MaxAverage") return SelectionStrategy::MaxAverage;
  if (name == "max-min" || name == "MaxMin") return SelectionStrategy::MaxMin;
  throw std::invalid_argument("unknown selection strategy: " + name);
}

std::string strategy_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::PerPairMax: return "per-pair-max";
    case SelectionStrategy::MaxAverage: return "max-average";
    case SelectionStrategy::MaxMin: return "max-min";
  }
  return "?";
}

namespace {

std::vector<std::vector<int>> canonical_candidates(
    const std::vector<std::vector<int>>& candidates, int n) {
  std::vector<std::vector<int>> out = candidates;
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& set = out[k];
    for (int lbl : set)
      if (lbl < 0 || lbl >= n)
        throw std::out_of_range("select_assignment: candidate label out of range");
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    if (set.empty())
      throw NoFeasibleTargetError(static_cast<int>(k),
                                  "select_assignment: empty candidate set for object " +
                                      std::to_string(k));
  }
  return out;
}

std::vector<int> per_pair_max(std::span<const int> victims,
                              const std::vector<std::vector<int>>& candidates,
                              const Pspm& pspm) {
  std::vector<int> chosen(victims.size());
  for (std::size_t k = 0; k < victims.size(); ++k) {
    int best = candidates[k].front();
    double best_p = pspm.effective(victims[k], best);
    for (int cand : candidates[k]) {
      const double p = pspm.effective(victims[k], cand);
      if (p > best_p) {  // ties keep the lowest label, sets are ascending
        best_p = p;
        best = cand;
      }
    }
    chosen[k] = best;
  }
  return chosen;
}

// Joint score with deterministic refinement: MaxAverage orders by (mean,
// lexicographically smallest labels), MaxMin by (min, mean, lexicographic).
// The mean refinement is what makes uncoupled instances land on the same
// assignment PerPairMax picks.
struct JointScore {
  double primary;
  double secondary;
};

JointScore joint_score(std::span<const int> victims, std::span<const int> assignment,
                       const Pspm& pspm, SelectionStrategy strategy) {
  double sum = 0;
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < victims.size(); ++k) {
    const double p = pspm.effective(victims[k], assignment[k]);
    sum += p;
    mn = std::min(mn, p);
  }
  const double mean = victims.empty() ? 0.0 : sum / static_cast<double>(victims.size());
  if (strategy == SelectionStrategy::MaxMin) return {mn, mean};
  return {mean, 0.0};
}

bool joint_better(const JointScore& a, const JointScore& b) {
  if (a.primary != b.primary) return a.primary > b.primary;
  return a.secondary > b.secondary;
}

std::vector<int> greedy_fallback(std::span<const int> victims,
                                 const std::vector<std::vector<int>>& candidates,
                                 const Pspm& pspm,
                                 const std::function<bool(std::span<const int>)>& feasible) {
  // Per-object argmax, restricted to choices that keep a feasible prefix
  // extendable by each set's first member. Best effort once exhaustive
  // search is off the table.
  std::vector<int> chosen;
  chosen.reserve(victims.size());
  for (std::size_t k = 0; k < victims.size(); ++k) {
    int best = -1;
    double best_p = -1;
    for (int cand : candidates[k]) {
      if (feasible) {
        chosen.push_back(cand);
        const bool ok = feasible(std::span<const int>(chosen.data(), chosen.size()));
        chosen.pop_back();
        if (!ok) continue;
      }
      const double p = pspm.effective(victims[k], cand);
      if (p > best_p) {
        best_p = p;
        best = cand;
      }
    }
    if (best < 0)
      throw NoFeasibleTargetError(static_cast<int>(k),
                                  "select_assignment: no feasible label for object " +
                                      std::to_string(k));
    chosen.push_back(best);
  }
  return chosen;
}

}  // namespace

std::vector<int> select_assignment(std::span<const int> victims,
                                   const std::vector<std::vector<int>>& candidates,
                                   const Pspm& pspm, SelectionStrategy strategy,
                                   const std::function<bool(std::span<const int>)>& feasible,
                                   SelectionDiagnostics* diag) {
  if (victims.size() != candidates.size())
    throw std::invalid_argument("select_assignment: one candidate set per object required");
  for (int v : victims)
    if (v < 0 || v >= pspm.n())
      throw std::out_of_range("select_assignment: victim label out of range");
  if (victims.empty()) return {};

  const auto sets = canonical_candidates(candidates, pspm.n());

  std::uint64_t space = 1;
  bool overflow = false;
  for (const auto& set : sets) {
    space *= set.size();
    if (space > kJointSearchLimit) {
      overflow = true;
      break;
    }
  }
  if (diag) {
    diag->joint_space = overflow ? 0 : space;
    diag->used_greedy_fallback = false;
  }

  // PerPairMax is per-object by definition; under a joint constraint it
  // degrades to sequential greedy over feasible prefixes.
  if (strategy == SelectionStrategy::PerPairMax) {
    if (!feasible) return per_pair_max(victims, sets, pspm);
    return greedy_fallback(victims, sets, pspm, feasible);
  }

  if (overflow) {
    if (diag) diag->used_greedy_fallback = true;
    return greedy_fallback(victims, sets, pspm, feasible);
  }

  // Exhaustive scan in lexicographic order; strict improvement keeps the
  // first (lexicographically smallest) of any score tie.
  std::vector<std::size_t> cursor(sets.size(), 0);
  std::vector<int> current(sets.size());
  std::vector<int> best;
  JointScore best_score{-1, -1};
  bool done = false;
  while (!done) {
    for (std::size_t k = 0; k < sets.size(); ++k) current[k] = sets[k][cursor[k]];
    if (!feasible || feasible(std::span<const int>(current.data(), current.size()))) {
      const JointScore score = joint_score(victims, current, pspm, strategy);
      if (best.empty() || joint_better(score, best_score)) {
        best = current;
        best_score = score;
      }
    }
    done = true;
    for (std::size_t k = sets.size(); k-- > 0;) {
      if (++cursor[k] < sets[k].size()) {
        done = false;
        break;
      }
      cursor[k] = 0;
    }
  }
  if (best.empty())
    throw NoFeasibleTargetError(0, "select_assignment: no feasible joint assignment");
  return best;
}

std::vector<int> select_assignment(std::span<const int> victims,
                                   const std::vector<std::vector<int>>& candidates,
                                   const Pspm& pspm, SelectionStrategy strategy,
                                   SelectionDiagnostics* diag) {
  return select_assignment(victims, candidates, pspm, strategy, nullptr, diag);
}

namespace {

template <typename T>
json matrix_to_json(const SquareMatrix<T>& m) {
  json rows = json::array();
  for (int i = 0; i < m.n(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.n(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
SquareMatrix<T> matrix_from_json(const json& j, int n, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw std::runtime_error(what + ": expected " + std::to_string(n) + " rows");
  SquareMatrix<T> m(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw std::runtime_error(what + ": row " + std::to_string(i) + " has wrong width");
    for (int jj = 0; jj < n; ++jj) m.at(i, jj) = row[jj].get<T>();
  }
  return m;
}

}  // namespace

void save_pspm(const std::string& path, const Pspm& pspm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pspm file: " + path);
  json j = {{"labels", pspm.labels.names()},
            {"ensemble", pspm.ensemble_id},
            {"epsilon", pspm.epsilon},
            {"algorithm", pspm.algorithm_id},
            {"probs", matrix_to_json(pspm.probs)},
            {"trials", matrix_to_json(pspm.trials)}};
  out << j.dump(2) << '\n';
}

Pspm load_pspm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pspm file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": JSON parse error: " + e.what());
  }
  Pspm pspm;
  pspm.labels = LabelSet(j.at("labels").get<std::vector<std::string>>());
  const int n = pspm.labels.size();
  pspm.ensemble_id = j.at("ensemble").get<std::string>();
  pspm.epsilon = j.at("epsilon").get<double>();
  pspm.algorithm_id = j.at("algorithm").get<std::string>();
  pspm.probs = matrix_from_json<double>(j.at("probs"), n, path + ": probs");
  pspm.trials = matrix_from_json<std::int64_t>(j.at("trials"), n, path + ": trials");
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double p = pspm.probs.at(i, k);
      if (p < 0 || p > 1)
        throw std::runtime_error(path + ": probability outside [0,1]");
      if (pspm.trials.at(i, k) < 0)
        throw std::runtime_error(path + ": negative trial count");
    }
  return pspm;
}

}  // namespace ctxattack
