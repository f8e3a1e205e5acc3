#include "ctxattack/context_model.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctxattack {

using nlohmann::json;

CooccurrenceCounts build_counts(const std::vector<Scene>& scenes, const LabelSet& labels) {
  const int n = labels.size();
  CooccurrenceCounts out{SquareMatrix<std::int64_t>(n)};

  std::vector<int> present;
  std::vector<int> multiplicity(n, 0);
  for (const Scene& scene : scenes) {
    present.clear();
    std::fill(multiplicity.begin(), multiplicity.end(), 0);
    for (const ObjectInstance& obj : scene.objects) {
      if (obj.label < 0 || obj.label >= n)
        throw std::out_of_range("build_counts: label index " +
                                std::to_string(obj.label) + " out of range in scene '" +
                                scene.scene_id + "'");
      if (multiplicity[obj.label]++ == 0) present.push_back(obj.label);
    }
    for (std::size_t a = 0; a < present.size(); ++a) {
      for (std::size_t b = a + 1; b < present.size(); ++b) {
        out.counts.at(present[a], present[b]) += 1;
        out.counts.at(present[b], present[a]) += 1;
      }
    }
    for (int lbl : present)
      if (multiplicity[lbl] >= 2) out.counts.at(lbl, lbl) += 1;
  }
  return out;
}

ConditionalCooccurrence normalize(const CooccurrenceCounts& counts) {
  const int n = counts.n();
  ConditionalCooccurrence out{SquareMatrix<double>(n), std::vector<std::int64_t>(n, 0)};
  for (int i = 0; i < n; ++i) {
    std::int64_t total = 0;
    for (int j = 0; j < n; ++j) total += counts.counts.at(i, j);
    out.row_totals[i] = total;
    if (total == 0) continue;
    for (int j = 0; j < n; ++j)
      out.probs.at(i, j) =
          static_cast<double>(counts.counts.at(i, j)) / static_cast<double>(total);
  }
  return out;
}

namespace {

template <typename M>
ContextGraph threshold_impl(const M& weights, int n, double eta) {
  ContextGraph g{eta, SquareMatrix<std::uint8_t>(n), SquareMatrix<double>(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w = static_cast<double>(weights.at(i, j));
      g.weights.at(i, j) = w;
      g.adjacency.at(i, j) = w > eta ? 1 : 0;
    }
  }
  return g;
}

}  // namespace

ContextGraph threshold(const CooccurrenceCounts& counts, double eta) {
  return threshold_impl(counts.counts, counts.n(), eta);
}

ContextGraph threshold_conditional(const ConditionalCooccurrence& cond, double eta) {
  return threshold_impl(cond.probs, cond.n(), eta);
}

bool is_context_consistent(std::span<const int> labels, const ContextGraph& graph) {
  const int n = graph.n();
  std::vector<int> distinct;
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= n)
      throw std::out_of_range("is_context_consistent: label index " +
                              std::to_string(lbl) + " out of range");
    if (std::find(distinct.begin(), distinct.end(), lbl) == distinct.end())
      distinct.push_back(lbl);
  }
  for (std::size_t a = 0; a < distinct.size(); ++a)
    for (std::size_t b = a + 1; b < distinct.size(); ++b)
      if (!graph.edge(distinct[a], distinct[b])) return false;
  return true;
}

std::vector<int> consistent_targets(int target, const ContextGraph& graph) {
  if (target < 0 || target >= graph.n())
    throw std::out_of_range("consistent_targets: label index " +
                            std::to_string(target) + " out of range");
  std::vector<int> pool;
  for (int j = 0; j < graph.n(); ++j)
    if (graph.edge(target, j)) pool.push_back(j);
  return pool;
}

ContextModel build_context_model(const Corpus& corpus, double eta) {
  ContextModel model;
  model.labels = corpus.labels;
  model.counts = build_counts(corpus.scenes, corpus.labels);
  model.conditional = normalize(model.counts);
  model.eta = eta;
  return model;
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

void save_context_model(const std::string& path, const ContextModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write context model: " + path);
  json j = {{"labels", model.labels.names()},
            {"eta", model.eta},
            {"counts", matrix_to_json(model.counts.counts)},
            {"conditional", matrix_to_json(model.conditional.probs)}};
  out << j.dump(2) << '\n';
}

ContextModel load_context_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open context model: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": JSON parse error: " + e.what());
  }

  ContextModel model;
  std::vector<std::string> names = j.at("labels").get<std::vector<std::string>>();
  model.labels = LabelSet(std::move(names));
  const int n = model.labels.size();
  model.eta = j.at("eta").get<double>();
  model.counts.counts = matrix_from_json<std::int64_t>(j.at("counts"), n, path + ": counts");
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k)
      if (model.counts.counts.at(i, k) != model.counts.counts.at(k, i))
        throw std::runtime_error(path + ": counts matrix is not symmetric");
  if (j.contains("conditional"))
    model.conditional.probs =
        matrix_from_json<double>(j.at("conditional"), n, path + ": conditional");
  else
    model.conditional = normalize(model.counts);
  if (model.conditional.row_totals.empty()) {
    model.conditional.row_totals.assign(n, 0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        model.conditional.row_totals[i] += model.counts.counts.at(i, k);
  }
  return model;
}

ContextGraph make_graph(const ContextModel& model, std::optional<double> eta_override,
                        bool threshold_on_conditional) {
  const double eta = eta_override.value_or(model.eta);
  return threshold_on_conditional ? threshold_conditional(model.conditional, eta)
                                  : threshold(model.counts, eta);
}

}  // namespace ctxattack
