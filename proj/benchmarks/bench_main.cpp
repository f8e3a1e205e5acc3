#include <benchmark/benchmark.h>

#include "ctxattack/context_model.hpp"
#include "ctxattack/harness.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/synthetic.hpp"
#include "ctxattack/victim.hpp"

namespace {

using namespace ctxattack;

struct Fixture {
  Corpus corpus;
  ContextModel ctx;
  ContextGraph graph;
  Pspm pspm;
  TrueSuccessModel model;
  AttackGoal goal;

  Fixture() {
    SyntheticConfig cfg;
    cfg.num_scenes = 200;
    cfg.seed = 99;
    corpus = generate_corpus(cfg);
    ctx = build_context_model(corpus);
    graph = make_graph(ctx);

    // flat mid-strength success table; selection cost is what matters here
    const int n = corpus.labels.size();
    TrialLog log;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        log.records.push_back({i, j, true});
        log.records.push_back({i, j, (i + j) % 2 == 0});
      }
    pspm = estimate_pspm(log, corpus.labels, "bench", 10, "pgd");
    model = make_white_box(pspm);

    const Scene* pick = nullptr;
    for (const Scene& s : corpus.scenes)
      if (s.size() >= 4) {
        pick = &s;
        break;
      }
    const Scene& scene = pick ? *pick : corpus.scenes.front();
    int target = scene.objects[0].label == 0 ? 1 : 0;
    goal = make_attack_goal(scene, 0, target);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_build_counts(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(build_counts(f.corpus.scenes, f.corpus.labels));
}
BENCHMARK(BM_build_counts);

void BM_is_context_consistent(benchmark::State& state) {
  Fixture& f = fixture();
  std::vector<int> labels;
  for (const ObjectInstance& o : f.goal.scene.objects) labels.push_back(o.label);
  for (auto _ : state)
    benchmark::DoNotOptimize(is_context_consistent(labels, f.graph));
}
BENCHMARK(BM_is_context_consistent);

void BM_plan_zero_query(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        plan_zero_query(f.goal, f.graph, f.pspm, SelectionStrategy::PerPairMax));
}
BENCHMARK(BM_plan_zero_query);

void BM_oracle_execute(benchmark::State& state) {
  Fixture& f = fixture();
  const AttackPlan plan =
      plan_zero_query(f.goal, f.graph, f.pspm, SelectionStrategy::PerPairMax);
  Rng rng(12345);
  for (auto _ : state)
    benchmark::DoNotOptimize(oracle_execute(plan, f.goal.scene, f.model, rng));
}
BENCHMARK(BM_oracle_execute);

void BM_pgd_attack(benchmark::State& state) {
  const ToyClassifier clf = make_toy_classifier(20, {}, 5);
  PgdConfig cfg;
  cfg.epsilon = static_cast<double>(state.range(0));
  std::vector<double> start(clf.anchor(0).begin(), clf.anchor(0).end());
  for (auto _ : state) benchmark::DoNotOptimize(pgd_attack(clf, start, 1, cfg));
}
BENCHMARK(BM_pgd_attack)->Arg(10)->Arg(50);

void BM_defend(benchmark::State& state) {
  Fixture& f = fixture();
  PerturbedDetection det;
  for (const ObjectInstance& o : f.goal.scene.objects)
    det.outcomes.push_back(DetectionOutcome::as(o.label));
  for (auto _ : state) benchmark::DoNotOptimize(defend(det, f.graph));
}
BENCHMARK(BM_defend);

}  // namespace

BENCHMARK_MAIN();
