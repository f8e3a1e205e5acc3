#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "ctxattack/context_model.hpp"
#include "ctxattack/rng.hpp"
#include "ctxattack/synthetic.hpp"
#include "test_util.hpp"

using namespace ctxattack;
using namespace ctxtest;

namespace {

// Independent recount: walk every scene, collect the distinct labels it
// holds, and bump every ordered pair of distinct members; the diagonal
// gets a bump when any label shows up twice.
SquareMatrix<std::int64_t> count_oracle(const std::vector<Scene>& scenes, int n) {
  SquareMatrix<std::int64_t> m(n);
  for (const Scene& scene : scenes) {
    std::map<int, int> multiplicity;
    for (const ObjectInstance& obj : scene.objects) ++multiplicity[obj.label];
    for (const auto& [a, ca] : multiplicity) {
      if (ca >= 2) ++m.at(a, a);
      for (const auto& [b, cb] : multiplicity)
        if (a != b) ++m.at(a, b);
    }
  }
  return m;
}

ContextGraph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  CooccurrenceCounts counts{SquareMatrix<std::int64_t>(n)};
  for (auto [a, b] : edges) {
    counts.counts.at(a, b) += 1;
    counts.counts.at(b, a) += (a == b) ? 0 : 1;
  }
  return threshold(counts, 0);
}

}  // namespace

TEST_CASE("pair counts match a brute-force recount") {
  SyntheticConfig cfg;
  cfg.num_labels = 8;
  cfg.num_scenes = 60;
  cfg.seed = 21;
  const Corpus corpus = generate_corpus(cfg);

  const CooccurrenceCounts counts = build_counts(corpus.scenes, corpus.labels);
  const auto oracle = count_oracle(corpus.scenes, corpus.labels.size());
  CHECK(counts.counts == oracle);

  // symmetry comes along for free
  for (int i = 0; i < counts.n(); ++i)
    for (int j = 0; j < counts.n(); ++j)
      CHECK(counts.counts.at(i, j) == counts.counts.at(j, i));
}

TEST_CASE("hand-built scenes hit exact cells") {
  const LabelSet labels({"cat", "dog", "bus"});
  std::vector<Scene> scenes;
  scenes.push_back(make_scene("a", {0, 1}));        // cat-dog
  scenes.push_back(make_scene("b", {0, 1, 1}));     // cat-dog + dog twice
  scenes.push_back(make_scene("c", {2}));           // bus alone
  scenes.push_back(make_scene("d", {2, 2}));        // bus twice

  const CooccurrenceCounts g = build_counts(scenes, labels);
  CHECK(g.counts.at(0, 1) == 2);
  CHECK(g.counts.at(1, 0) == 2);
  CHECK(g.counts.at(1, 1) == 1);
  CHECK(g.counts.at(2, 2) == 1);
  CHECK(g.counts.at(0, 0) == 0);
  CHECK(g.counts.at(0, 2) == 0);
}

TEST_CASE("out-of-range labels are rejected") {
  const LabelSet labels({"cat", "dog"});
  std::vector<Scene> scenes{make_scene("a", {0, 5})};
  CHECK_THROWS_AS(build_counts(scenes, labels), std::out_of_range);
}

TEST_CASE("normalize rows sum to one or stay zero") {
  SyntheticConfig cfg;
  cfg.num_labels = 10;
  cfg.num_scenes = 40;
  cfg.seed = 5;
  const Corpus corpus = generate_corpus(cfg);
  const CooccurrenceCounts counts = build_counts(corpus.scenes, corpus.labels);
  const ConditionalCooccurrence cond = normalize(counts);

  for (int i = 0; i < cond.n(); ++i) {
    double row = 0;
    std::int64_t total = 0;
    for (int j = 0; j < cond.n(); ++j) {
      row += cond.probs.at(i, j);
      total += counts.counts.at(i, j);
    }
    CHECK(cond.row_totals[i] == total);
    if (total == 0)
      CHECK(row == 0);
    else
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalize divides by the row total exactly") {
  CooccurrenceCounts counts{SquareMatrix<std::int64_t>(3)};
  counts.counts.at(0, 1) = 3;
  counts.counts.at(0, 2) = 1;
  counts.counts.at(1, 0) = 3;
  const ConditionalCooccurrence cond = normalize(counts);
  CHECK(cond.probs.at(0, 1) == doctest::Approx(0.75));
  CHECK(cond.probs.at(0, 2) == doctest::Approx(0.25));
  CHECK(cond.probs.at(1, 0) == doctest::Approx(1.0));
  CHECK(cond.probs.at(2, 0) == 0.0);
  CHECK(cond.probs.at(2, 2) == 0.0);
}

TEST_CASE("threshold is strict") {
  CooccurrenceCounts counts{SquareMatrix<std::int64_t>(2)};
  counts.counts.at(0, 1) = counts.counts.at(1, 0) = 5;
  CHECK(threshold(counts, 4.999).edge(0, 1));
  CHECK_FALSE(threshold(counts, 5.0).edge(0, 1));  // equality is not enough
  CHECK_FALSE(threshold(counts, 6.0).edge(0, 1));
  CHECK(threshold(counts, 0).weights.at(0, 1) == 5.0);

  ConditionalCooccurrence cond{SquareMatrix<double>(2), {1, 0}};
  cond.probs.at(0, 1) = 0.4;
  CHECK(threshold_conditional(cond, 0.39).edge(0, 1));
  CHECK_FALSE(threshold_conditional(cond, 0.4).edge(0, 1));
}

TEST_CASE("consistency equals the all-pairs oracle on random graphs") {
  Rng rng(77);
  const int n = 6;
  for (int trial = 0; trial < 200; ++trial) {
    // random symmetric adjacency, ~40% edge density, random self-edges
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        if (rng.uniform() < 0.4) edges.push_back({i, j});
    const ContextGraph graph = graph_from_edges(n, edges);

    // every label list of length <= 4 over the n labels
    std::vector<int> list;
    for (int len = 0; len <= 4; ++len) {
      std::vector<int> idx(len, 0);
      while (true) {
        list.assign(idx.begin(), idx.end());
        std::set<int> distinct(list.begin(), list.end());
        bool oracle = true;
        for (int a : distinct)
          for (int b : distinct)
            if (a < b && !graph.edge(a, b)) oracle = false;
        CHECK(is_context_consistent(list, graph) == oracle);

        int k = len - 1;
        while (k >= 0 && idx[k] == n - 1) idx[k--] = 0;
        if (k < 0) break;
        ++idx[k];
      }
    }
  }
}

TEST_CASE("repeated labels need no self-edge") {
  const ContextGraph graph = graph_from_edges(3, {{0, 1}});
  const std::vector<int> twice{0, 0};
  const std::vector<int> mixed{0, 0, 1};
  CHECK(is_context_consistent(twice, graph));
  CHECK(is_context_consistent(mixed, graph));
  CHECK(is_context_consistent(std::vector<int>{}, graph));
  CHECK(is_context_consistent(std::vector<int>{2}, graph));
  CHECK_FALSE(is_context_consistent(std::vector<int>{0, 2}, graph));
}

TEST_CASE("consistent_targets lists neighbors plus self-edge") {
  const ContextGraph graph = graph_from_edges(4, {{0, 1}, {0, 3}, {1, 1}});
  CHECK(consistent_targets(0, graph) == std::vector<int>{1, 3});
  CHECK(consistent_targets(1, graph) == std::vector<int>{0, 1});  // self-edge keeps 1
  CHECK(consistent_targets(2, graph).empty());
}

TEST_CASE("context model round trip and graph rebuilds") {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.num_labels = 8;
  cfg.num_scenes = 50;
  cfg.seed = 3;
  const Corpus corpus = generate_corpus(cfg);
  const ContextModel model = build_context_model(corpus, 1.0);

  const std::string path = dir.file("context.json");
  save_context_model(path, model);
  const ContextModel back = load_context_model(path);
  CHECK(back.labels == model.labels);
  CHECK(back.eta == model.eta);
  CHECK(back.counts.counts == model.counts.counts);
  for (int i = 0; i < back.conditional.n(); ++i)
    for (int j = 0; j < back.conditional.n(); ++j)
      CHECK(back.conditional.probs.at(i, j) ==
            doctest::Approx(model.conditional.probs.at(i, j)).epsilon(1e-12));

  // stored eta, an override, and the conditional switch all change edges
  const ContextGraph stored = make_graph(back);
  CHECK(stored.eta == 1.0);
  const ContextGraph loose = make_graph(back, 0.0);
  int stored_edges = 0, loose_edges = 0;
  for (int i = 0; i < stored.n(); ++i)
    for (int j = 0; j < stored.n(); ++j) {
      stored_edges += stored.edge(i, j);
      loose_edges += loose.edge(i, j);
    }
  CHECK(loose_edges >= stored_edges);

  const ContextGraph cond_graph = make_graph(back, 0.0, true);
  for (int i = 0; i < cond_graph.n(); ++i)
    for (int j = 0; j < cond_graph.n(); ++j)
      CHECK(cond_graph.weights.at(i, j) ==
            doctest::Approx(back.conditional.probs.at(i, j)));
}

TEST_CASE("loader rejects asymmetric counts") {
  TempDir dir;
  const std::string path = dir.file("bad.json");
  write_text(path, R"({"labels":["a","b"],"eta":0,
    "counts":[[0,2],[1,0]]})");
  CHECK_THROWS_WITH_AS(load_context_model(path), doctest::Contains("symmetric"),
                       std::runtime_error);
}

TEST_CASE("loader recomputes a missing conditional block") {
  TempDir dir;
  const std::string path = dir.file("ctx.json");
  write_text(path, R"({"labels":["a","b"],"eta":0,
    "counts":[[0,4],[4,0]]})");
  const ContextModel model = load_context_model(path);
  CHECK(model.conditional.probs.at(0, 1) == doctest::Approx(1.0));
  CHECK(model.conditional.probs.at(1, 0) == doctest::Approx(1.0));
}
