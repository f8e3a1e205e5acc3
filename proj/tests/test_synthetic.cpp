#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "ctxattack/context_model.hpp"
#include "ctxattack/synthetic.hpp"

using namespace ctxattack;

TEST_CASE("default names cover the usual twenty, else placeholders") {
  const auto voc = default_label_names(20);
  REQUIRE(voc.size() == 20);
  CHECK(voc.front() == "aeroplane");
  CHECK(voc.back() == "tvmonitor");
  CHECK(std::count(voc.begin(), voc.end(), "diningtable") == 1);
  CHECK(std::count(voc.begin(), voc.end(), "pottedplant") == 1);
  CHECK(std::set<std::string>(voc.begin(), voc.end()).size() == 20);

  const auto generic = default_label_names(7);
  REQUIRE(generic.size() == 7);
  CHECK(generic[0] == "label00");
  CHECK(generic[6] == "label06");
}

TEST_CASE("generation respects the configured shape") {
  SyntheticConfig cfg;
  cfg.num_labels = 12;
  cfg.num_scenes = 80;
  cfg.seed = 77;
  cfg.min_objects = 3;
  cfg.max_objects = 5;
  const Corpus corpus = generate_corpus(cfg);

  CHECK(corpus.labels.size() == 12);
  REQUIRE(static_cast<int>(corpus.scenes.size()) == 80);
  std::set<std::string> ids;
  for (const Scene& scene : corpus.scenes) {
    ids.insert(scene.scene_id);
    CHECK(scene.width == cfg.canvas_width);
    CHECK(scene.height == cfg.canvas_height);
    CHECK(scene.size() >= 3);
    CHECK(scene.size() <= 5);
    for (const ObjectInstance& obj : scene.objects) {
      CHECK(obj.label >= 0);
      CHECK(obj.label < 12);
      CHECK(obj.bbox.x_min >= 0);
      CHECK(obj.bbox.y_min >= 0);
      CHECK(obj.bbox.x_max <= cfg.canvas_width);
      CHECK(obj.bbox.y_max <= cfg.canvas_height);
      CHECK(obj.bbox.width() > 0);
      CHECK(obj.bbox.height() > 0);
      CHECK(obj.score >= 0.5);
      CHECK(obj.score < 1.0);
    }
  }
  CHECK(ids.size() == 80);  // scene ids are unique
}

TEST_CASE("same seed replays the corpus, other seeds move it") {
  SyntheticConfig cfg;
  cfg.num_labels = 10;
  cfg.num_scenes = 40;
  cfg.seed = 5;
  const Corpus a = generate_corpus(cfg);
  const Corpus b = generate_corpus(cfg);
  REQUIRE(a.scenes.size() == b.scenes.size());
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.scenes.size(); ++i) CHECK(a.scenes[i] == b.scenes[i]);

  cfg.seed = 6;
  const Corpus c = generate_corpus(cfg);
  bool different = false;
  for (std::size_t i = 0; i < a.scenes.size() && !different; ++i)
    different = !(a.scenes[i] == c.scenes[i]);
  CHECK(different);
}

TEST_CASE("themes leave the co-occurrence graph meaningfully sparse") {
  SyntheticConfig cfg;  // 20 labels, 500 scenes
  const Corpus corpus = generate_corpus(cfg);
  const CooccurrenceCounts counts = build_counts(corpus.scenes, corpus.labels);
  const ContextGraph graph = threshold(counts, 0);

  int edges = 0, possible = 0;
  for (int i = 0; i < graph.n(); ++i)
    for (int j = i + 1; j < graph.n(); ++j) {
      edges += graph.edge(i, j);
      ++possible;
    }
  // sparse but connected enough to plan against
  CHECK(edges > possible / 10);
  CHECK(edges < possible * 6 / 10);

  // every scene is consistent with the graph its own corpus induces
  for (const Scene& scene : corpus.scenes) {
    std::vector<int> labels;
    for (const ObjectInstance& obj : scene.objects) labels.push_back(obj.label);
    CHECK(is_context_consistent(labels, graph));
  }
}

TEST_CASE("invalid configurations are rejected") {
  SyntheticConfig cfg;
  cfg.num_labels = 1;
  CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
  cfg.num_labels = 10;
  cfg.min_objects = 5;
  cfg.max_objects = 3;
  CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
}
