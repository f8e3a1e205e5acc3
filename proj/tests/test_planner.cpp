#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "ctxattack/context_model.hpp"
#include "ctxattack/errors.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/pspm.hpp"
#include "ctxattack/rng.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace ctxattack;
using namespace ctxtest;

namespace {

// cat dog person chair sofa table
const int kCat = 0, kDog = 1, kPerson = 2, kChair = 3, kSofa = 4, kTable = 5;

LabelSet six_labels() {
  return LabelSet({"cat", "dog", "person", "chair", "sofa", "table"});
}

ContextGraph graph_with(const std::vector<std::pair<int, int>>& edges) {
  CooccurrenceCounts counts{SquareMatrix<std::int64_t>(6)};
  for (auto [a, b] : edges) {
    counts.counts.at(a, b) += 1;
    if (a != b) counts.counts.at(b, a) += 1;
  }
  return threshold(counts, 0);
}

Pspm flat_pspm(double p = 0.5) {
  Pspm pspm{six_labels(), "e", 10, "alg", SquareMatrix<double>(6),
            SquareMatrix<std::int64_t>(6)};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      pspm.probs.at(i, j) = p;
      pspm.trials.at(i, j) = 100;
    }
  return pspm;
}

std::vector<int> planned_labels(const AttackPlan& plan, const Scene& scene) {
  std::vector<int> out;
  for (int i = 0; i < scene.size(); ++i)
    out.push_back(plan.directives[i].perturb ? plan.directives[i].target_label
                                             : scene.objects[i].label);
  return out;
}

}  // namespace

TEST_CASE("attack goal validation") {
  const Scene scene = make_scene("s", {kChair, kTable});
  CHECK_THROWS_AS(make_attack_goal(scene, 5, kDog), std::invalid_argument);
  CHECK_THROWS_AS(make_attack_goal(scene, -1, kDog), std::invalid_argument);
  CHECK_THROWS_AS(make_attack_goal(scene, 0, -2), std::invalid_argument);
  CHECK_THROWS_AS(make_attack_goal(scene, 0, kChair), std::invalid_argument);
  const AttackGoal goal = make_attack_goal(scene, 0, kDog);
  CHECK(goal.victim_index == 0);
  CHECK(goal.target_label == kDog);
}

TEST_CASE("method names round trip") {
  for (auto m : {PlanMethod::ContextAgnostic, PlanMethod::Zqa, PlanMethod::ZqaPspm,
                 PlanMethod::FewQuery})
    CHECK(parse_method(method_name(m)) == m);
  CHECK(parse_method("zqa-pspm") == PlanMethod::ZqaPspm);
  CHECK(parse_method("few-query") == PlanMethod::FewQuery);
  CHECK_THROWS_AS(parse_method("surprise"), std::invalid_argument);
}

TEST_CASE("zero-query sends helpers to the pool's best payoff") {
  // dog co-occurs with cat and person only; chairs convert to person easily
  const ContextGraph graph = graph_with({{kDog, kCat}, {kDog, kPerson}});
  Pspm pspm = flat_pspm(0.0);
  pspm.probs.at(kChair, kCat) = 0.2;
  pspm.probs.at(kChair, kPerson) = 0.9;
  pspm.probs.at(kTable, kCat) = 0.2;
  pspm.probs.at(kTable, kPerson) = 0.9;

  const Scene scene = make_scene("s", {kChair, kChair, kTable});
  const AttackGoal goal = make_attack_goal(scene, 2, kDog);
  const AttackPlan plan =
      plan_zero_query(goal, graph, pspm, SelectionStrategy::PerPairMax);

  CHECK(plan.method == PlanMethod::ZqaPspm);
  CHECK(plan.round == 0);
  REQUIRE(plan.directives.size() == 3);
  CHECK(plan.directives[2] == Directive::to(kDog));
  CHECK(plan.directives[0] == Directive::to(kPerson));
  CHECK(plan.directives[1] == Directive::to(kPerson));
}

TEST_CASE("strict clique keeps the planned labels consistent") {
  // pool(dog) = {cat, person} but cat and person never co-occur
  const ContextGraph graph = graph_with({{kDog, kCat}, {kDog, kPerson}});
  Pspm pspm = flat_pspm(0.0);
  pspm.probs.at(kChair, kCat) = 0.9;
  pspm.probs.at(kChair, kPerson) = 0.1;
  pspm.probs.at(kSofa, kCat) = 0.1;
  pspm.probs.at(kSofa, kPerson) = 0.9;

  const Scene scene = make_scene("s", {kChair, kSofa, kTable});
  const AttackGoal goal = make_attack_goal(scene, 2, kDog);

  const AttackPlan loose =
      plan_zero_query(goal, graph, pspm, SelectionStrategy::PerPairMax, false);
  CHECK(loose.directives[0] == Directive::to(kCat));
  CHECK(loose.directives[1] == Directive::to(kPerson));
  CHECK_FALSE(is_context_consistent(planned_labels(loose, scene), graph));

  for (auto strategy : {SelectionStrategy::PerPairMax, SelectionStrategy::MaxAverage,
                        SelectionStrategy::MaxMin}) {
    const AttackPlan strict = plan_zero_query(goal, graph, pspm, strategy, true);
    CHECK(is_context_consistent(planned_labels(strict, scene), graph));
  }

  // greedy commits cat for the chair first, so the sofa settles for cat too
  const AttackPlan strict =
      plan_zero_query(goal, graph, pspm, SelectionStrategy::PerPairMax, true);
  CHECK(strict.directives[0] == Directive::to(kCat));
  CHECK(strict.directives[1] == Directive::to(kCat));
}

TEST_CASE("isolated targets are infeasible unless the victim is alone") {
  const ContextGraph graph = graph_with({{kDog, kCat}});  // sofa has no neighbors
  const Pspm pspm = flat_pspm();

  const Scene crowd = make_scene("s", {kChair, kTable});
  CHECK_THROWS_AS(plan_zero_query(make_attack_goal(crowd, 0, kSofa), graph, pspm,
                                  SelectionStrategy::PerPairMax),
                  NoFeasibleTargetError);

  const Scene solo = make_scene("s", {kChair});
  const AttackPlan plan = plan_zero_query(make_attack_goal(solo, 0, kSofa), graph, pspm,
                                          SelectionStrategy::PerPairMax);
  REQUIRE(plan.directives.size() == 1);
  CHECK(plan.directives[0] == Directive::to(kSofa));
}

TEST_CASE("helper order is by area, scene order on ties") {
  Scene scene = make_scene("s", {kCat, kDog, kPerson, kChair});
  CHECK(helper_order(scene, 1) == std::vector<int>{0, 2, 3});
  CHECK(helper_order(scene, 3) == std::vector<int>{0, 1, 2});

  // equal boxes keep scene order
  for (auto& obj : scene.objects) obj.bbox = box(0, 0, 50, 50);
  CHECK(helper_order(scene, 0) == std::vector<int>{1, 2, 3});
}

TEST_CASE("few-query plans nest one helper at a time") {
  const ContextGraph graph = graph_with({{kDog, kCat}, {kDog, kPerson}});
  const Scene scene = make_scene("s", {kChair, kSofa, kTable, kChair});
  const AttackGoal goal = make_attack_goal(scene, 1, kDog);

  Rng rng(3);
  const FewQuerySequence seq = plan_few_query(goal, graph, 4, rng);
  REQUIRE(seq.plans.size() == 4);

  const std::vector<int> order = helper_order(scene, 1);  // {0, 2, 3}
  const std::set<int> pool{kCat, kPerson};
  for (int k = 0; k < 4; ++k) {
    const AttackPlan& plan = seq.plans[k];
    CHECK(plan.method == PlanMethod::FewQuery);
    CHECK(plan.round == k);
    CHECK(plan.directives[1] == Directive::to(kDog));
    for (int h = 0; h < 3; ++h) {
      const Directive& d = plan.directives[order[h]];
      if (h < k) {
        REQUIRE(d.perturb);
        CHECK(pool.count(d.target_label) == 1);
      } else {
        CHECK(d == Directive::unchanged());
      }
    }
  }
  // nesting: plan k equals plan k-1 plus exactly one new perturbation
  for (int k = 1; k < 4; ++k) {
    int changed = 0;
    for (std::size_t i = 0; i < seq.plans[k].directives.size(); ++i)
      changed += seq.plans[k].directives[i] != seq.plans[k - 1].directives[i];
    CHECK(changed == 1);
    CHECK(seq.plans[k].directives[order[k - 1]].perturb);
  }

  Rng rng2(3);
  CHECK_THROWS_AS(plan_few_query(goal, graph, 0, rng2), std::invalid_argument);
  CHECK_THROWS_AS(plan_few_query(goal, graph, 5, rng2), std::invalid_argument);
}

TEST_CASE("few-query with an isolated target only works victim-alone") {
  const ContextGraph graph = graph_with({{kDog, kCat}});
  const Scene scene = make_scene("s", {kChair, kTable});
  const AttackGoal goal = make_attack_goal(scene, 0, kSofa);
  Rng rng(1);
  CHECK_THROWS_AS(plan_few_query(goal, graph, 2, rng), NoFeasibleTargetError);
  const FewQuerySequence seq = plan_few_query(goal, graph, 1, rng);
  REQUIRE(seq.plans.size() == 1);
  CHECK(seq.plans[0].directives[0] == Directive::to(kSofa));
  CHECK(seq.plans[0].directives[1] == Directive::unchanged());
}

TEST_CASE("uniform zero-query is the fully escalated few-query draw") {
  const ContextGraph graph = graph_with({{kDog, kCat}, {kDog, kPerson}});
  const Scene scene = make_scene("s", {kChair, kSofa, kTable});
  const AttackGoal goal = make_attack_goal(scene, 0, kDog);

  Rng a(17), b(17);
  const AttackPlan uniform = plan_zero_query_uniform(goal, graph, a);
  const FewQuerySequence seq = plan_few_query(goal, graph, scene.size(), b);
  CHECK(uniform.directives == seq.plans.back().directives);
  CHECK(uniform.method == PlanMethod::Zqa);
  CHECK(uniform.round == 0);
}

TEST_CASE("uniform helpers cover the whole pool evenly") {
  const ContextGraph graph =
      graph_with({{kDog, kCat}, {kDog, kPerson}, {kDog, kChair}, {kDog, kDog}});
  const Scene scene = make_scene("s", {kTable, kSofa});
  const AttackGoal goal = make_attack_goal(scene, 0, kDog);

  // pool = {cat, dog, person, chair}; count the helper draw
  const std::vector<int> pool{kCat, kDog, kPerson, kChair};
  std::vector<int> hits(6, 0);
  Rng rng(5);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const AttackPlan plan = plan_zero_query_uniform(goal, graph, rng);
    ++hits[plan.directives[1].target_label];
  }
  const double expect = draws / 4.0;
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (int lbl : pool) CHECK(std::abs(hits[lbl] - expect) < 3 * sigma);
  CHECK(hits[kTable] == 0);
  CHECK(hits[kSofa] == 0);
}

TEST_CASE("context-agnostic draws avoid only the current label") {
  const LabelSet labels = six_labels();
  const Scene scene = make_scene("s", {kChair, kDog});
  const AttackGoal goal = make_attack_goal(scene, 0, kPerson);

  std::vector<int> hits(6, 0);
  Rng rng(11);
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    const AttackPlan plan = plan_context_agnostic(goal, labels, rng);
    CHECK(plan.directives[0] == Directive::to(kPerson));
    REQUIRE(plan.directives[1].perturb);
    ++hits[plan.directives[1].target_label];
  }
  CHECK(hits[kDog] == 0);  // never its own label
  const double p = 1.0 / 5.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int lbl = 0; lbl < 6; ++lbl) {
    if (lbl == kDog) continue;
    CHECK(std::abs(hits[lbl] - draws * p) < 3 * sigma);
  }
}

TEST_CASE("iou matches hand values and a lattice count") {
  CHECK(iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == doctest::Approx(1.0));
  CHECK(iou(box(0, 0, 10, 10), box(20, 20, 5, 5)) == 0.0);
  CHECK(iou(box(0, 0, 10, 10), box(5, 0, 10, 10)) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(box(0, 0, 10, 10), box(10, 0, 10, 10)) == 0.0);  // touching edges

  // integer boxes: count unit cells in each region as an independent oracle
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int ax = static_cast<int>(rng.index(20)), ay = static_cast<int>(rng.index(20));
    const int bx = static_cast<int>(rng.index(20)), by = static_cast<int>(rng.index(20));
    const int aw = 1 + static_cast<int>(rng.index(15));
    const int ah = 1 + static_cast<int>(rng.index(15));
    const int bw = 1 + static_cast<int>(rng.index(15));
    const int bh = 1 + static_cast<int>(rng.index(15));
    const BoundingBox a = box(ax, ay, aw, ah), b = box(bx, by, bw, bh);

    long inter = 0;
    for (int x = 0; x < 40; ++x)
      for (int y = 0; y < 40; ++y) {
        const bool in_a = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
        const bool in_b = x >= bx && x < bx + bw && y >= by && y < by + bh;
        inter += in_a && in_b;
      }
    const double uni = static_cast<double>(aw) * ah + static_cast<double>(bw) * bh - inter;
    CHECK(iou(a, b) == doctest::Approx(inter / uni).epsilon(1e-12));
  }
}

TEST_CASE("overlapping helpers get pulled onto the victim's target") {
  Scene scene = make_scene("s", {kChair, kSofa, kTable});
  scene.objects[0].bbox = box(100, 100, 100, 100);   // victim
  scene.objects[1].bbox = box(150, 100, 100, 100);   // iou = 1/3 with victim
  scene.objects[2].bbox = box(400, 300, 50, 50);     // far away
  const AttackGoal goal = make_attack_goal(scene, 0, kDog);

  AttackPlan plan;
  plan.directives.assign(3, Directive::unchanged());
  plan.directives[0] = Directive::to(kDog);
  plan.directives[1] = Directive::to(kCat);

  const AttackPlan merged = apply_overlap_merge(plan, goal, 0.3);
  CHECK(merged.directives[1] == Directive::to(kDog));
  CHECK(merged.directives[2] == Directive::unchanged());

  // threshold is inclusive, and the rewrite is idempotent
  const AttackPlan at_threshold = apply_overlap_merge(plan, goal, 1.0 / 3.0);
  CHECK(at_threshold.directives[1] == Directive::to(kDog));
  const AttackPlan above = apply_overlap_merge(plan, goal, 0.34);
  CHECK(above.directives[1] == Directive::to(kCat));
  CHECK(apply_overlap_merge(merged, goal, 0.3).directives == merged.directives);

  AttackPlan wrong;
  wrong.directives.assign(2, Directive::unchanged());
  CHECK_THROWS_AS(apply_overlap_merge(wrong, goal, 0.3), std::invalid_argument);
}

TEST_CASE("plans serialize with named labels") {
  const LabelSet labels = six_labels();
  const Scene scene = make_scene("sc-7", {kChair, kSofa});
  const AttackGoal goal = make_attack_goal(scene, 0, kDog);
  AttackPlan plan;
  plan.method = PlanMethod::ZqaPspm;
  plan.round = 0;
  plan.directives = {Directive::to(kDog), Directive::unchanged()};

  const auto j = nlohmann::json::parse(plan_to_json(plan, goal, labels));
  CHECK(j.at("scene_id") == "sc-7");
  CHECK(j.at("method") == "ZQA-PSPM");
  CHECK(j.at("round") == 0);
  CHECK(j.at("victim_index") == 0);
  CHECK(j.at("target") == "dog");
  REQUIRE(j.at("directives").size() == 2);
  CHECK(j.at("directives")[0].at("action") == "perturb");
  CHECK(j.at("directives")[0].at("to") == "dog");
  CHECK(j.at("directives")[1].at("action") == "unchanged");
}

TEST_CASE("planning is deterministic per seed") {
  const ContextGraph graph = graph_with({{kDog, kCat}, {kDog, kPerson}});
  const Scene scene = make_scene("s", {kChair, kSofa, kTable, kChair});
  const AttackGoal goal = make_attack_goal(scene, 3, kDog);

  Rng a(42), b(42), c(43);
  const AttackPlan pa = plan_zero_query_uniform(goal, graph, a);
  const AttackPlan pb = plan_zero_query_uniform(goal, graph, b);
  CHECK(pa.directives == pb.directives);

  bool diverged = false;
  for (int i = 0; i < 50 && !diverged; ++i) {
    Rng c2(43 + i);
    diverged = plan_zero_query_uniform(goal, graph, c2).directives != pa.directives;
  }
  CHECK(diverged);
}
