#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "prunegraph/error.hpp"
#include "prunegraph/executor.hpp"
#include "prunegraph/prune.hpp"
#include "prunegraph/train.hpp"
#include "prunegraph/validate.hpp"
#include "prunegraph/zoo.hpp"

using namespace prunegraph;

namespace {

Analysis vanilla(const ModelGraph& g) { return analyze(g, nullptr, Mode::Vanilla); }

Analysis aware(const ModelGraph& g, const WeightStore& w) {
  const auto ifc = trace_interfaces(g, w);
  return analyze(g, &ifc, Mode::ComponentAware);
}

// Plan removing the physical class that holds one index of one slot.
PruningPlan plan_for(const Analysis& a, const std::string& layer, Side side, std::int64_t index) {
  std::optional<std::size_t> slot;
  for (std::size_t s = 0; s < a.dep.slots.size(); ++s)
    if (a.dep.slots[s].layer == layer && a.dep.slots[s].side == side && a.dep.slots[s].port == 0) slot = s;
  REQUIRE(slot);
  PruningPlan plan;
  plan.removed = {a.physical.class_of[a.dep.atom(*slot, index)]};
  return plan;
}

WeightStore scaled(const WeightStore& w, float c) {
  auto blob = w.blob();
  for (auto& v : blob) v *= c;
  return WeightStore(w.manifest(), std::move(blob));
}

// Parameter count implied by layer attrs alone.
std::size_t params_from_attrs(const ModelGraph& g) {
  std::size_t n = 0;
  for (const auto& node : g.nodes) {
    const auto& a = node.attrs;
    if (node.kind == LayerKind::Linear) n += static_cast<std::size_t>(a.in_dim * a.out_dim + a.out_dim);
    if (node.kind == LayerKind::Conv2d)
      n += static_cast<std::size_t>(a.out_ch * a.in_ch * a.kernel * a.kernel + a.out_ch);
    if (node.kind == LayerKind::BatchNorm) n += static_cast<std::size_t>(4 * a.channels);
  }
  return n;
}

std::vector<float> matrix(const WeightStore& w, const std::string& layer, const std::string& name) {
  const auto t = w.tensor(layer, name);
  return {t.begin(), t.end()};
}

const ImportanceScore& score_of(const std::vector<ImportanceScore>& scores, std::size_t group) {
  for (const auto& s : scores)
    if (s.group == group) return s;
  FAIL("no score for group");
  return scores.front();
}

}  // namespace

TEST_CASE("l1 and l2 scores of a 2x2 linear by hand") {
  const auto g = testutil::single_linear(2, 2);
  WeightStoreBuilder wb;
  wb.add("m.fc", "weight", {2, 2}, {1, 1, 3, -3});
  wb.add("m.fc", "bias", {2}, {0, 0});
  const auto w = std::move(wb).build();
  const auto a = vanilla(g);
  std::size_t out_group = a.groups.size();
  for (const auto& grp : a.groups)
    for (auto s : grp.slots)
      if (a.dep.slots[s].side == Side::Output) out_group = grp.id;
  REQUIRE(out_group < a.groups.size());

  const auto l1 = score_of(score_groups(g, w, a, Norm::L1), out_group).class_scores;
  CHECK(l1 == std::vector<double>{2.0, 6.0});
  const auto l2 = score_of(score_groups(g, w, a, Norm::L2), out_group).class_scores;
  REQUIRE(l2.size() == 2);
  CHECK(l2[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(l2[1] == doctest::Approx(std::sqrt(18.0)));

  const auto l1x4 = score_of(score_groups(g, scaled(w, 4.0f), a, Norm::L1), out_group).class_scores;
  CHECK(l1x4 == std::vector<double>{8.0, 24.0});
}

TEST_CASE("component weight multiplies scores and zero weights score zero") {
  const auto m = build_zoo_model("simple");
  const auto a = vanilla(m.graph);
  const auto base = score_groups(m.graph, m.weights, a, Norm::L1);
  const auto boosted = score_groups(m.graph, m.weights, a, Norm::L1, {{"c", 3.0}});
  for (std::size_t i = 0; i < base.size(); ++i) {
    const bool touches_c = std::count(a.groups[base[i].group].components.begin(),
                                      a.groups[base[i].group].components.end(), "c") > 0;
    CHECK(boosted[i].component_weight == (touches_c ? 3.0 : 1.0));
    for (std::size_t k = 0; k < base[i].class_scores.size(); ++k)
      CHECK(boosted[i].class_scores[k] == doctest::Approx(base[i].class_scores[k] * boosted[i].component_weight));
  }
  for (const auto& s : score_groups(m.graph, scaled(m.weights, 0.0f), a, Norm::L2))
    for (double v : s.class_scores) CHECK(v == 0.0);
}

TEST_CASE("missing layer weights are reported") {
  const auto g = testutil::two_linear(3, 4, 2);
  WeightStoreBuilder wb;
  wb.add("m.fc1", "weight", {4, 3}, std::vector<float>(12, 1.0f));
  wb.add("m.fc1", "bias", {4}, std::vector<float>(4, 0.0f));
  const auto w = std::move(wb).build();
  try {
    score_groups(g, w, vanilla(g), Norm::L1);
    FAIL("expected missing weights");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingWeights);
  }
}

TEST_CASE("greedy allocation removes the three lowest of ten") {
  // Hidden unit k of fc1 has l1 score k+1; fc2 columns are zero.
  const auto g = testutil::two_linear(4, 10, 1);
  WeightStoreBuilder wb;
  std::vector<float> w1(40, 0.0f);
  const std::vector<std::int64_t> order{3, 7, 0, 9, 1, 5, 2, 8, 6, 4};  // unit -> score - 1
  for (std::size_t k = 0; k < 10; ++k) w1[k * 4] = static_cast<float>(order[k] + 1);
  wb.add("m.fc1", "weight", {10, 4}, w1);
  wb.add("m.fc1", "bias", {10}, std::vector<float>(10, 0.0f));
  wb.add("m.fc2", "weight", {1, 10}, std::vector<float>(10, 0.0f));
  wb.add("m.fc2", "bias", {1}, {0.0f});
  const auto w = std::move(wb).build();
  const auto a = vanilla(g);
  const auto scores = score_groups(g, w, a, Norm::L1);

  const auto plan = allocate(g, a, scores, 0.3);
  CHECK(plan.removable == 10);
  CHECK(plan.removed.size() == 3);
  CHECK(plan.achieved == doctest::Approx(0.3));
  CHECK_FALSE(plan.unreachable);
  const auto removed = removed_indices(a, plan);
  const auto slot = *build_slots(g).find("m.fc1", Side::Output, 0);
  CHECK(removed[slot] == std::vector<std::int64_t>{2, 4, 6});  // scores 2, 3, 1
  const auto zero = allocate(g, a, scores, 0.0);
  CHECK(zero.removed.empty());
  CHECK(zero.removals.empty());

  CHECK_THROWS_AS(allocate(g, a, scores, 1.0), Error);
  CHECK_THROWS_AS(allocate(g, a, scores, -0.1), Error);
  CHECK_THROWS_AS(allocate(g, a, scores, 0.2, {"nope"}), Error);
}

TEST_CASE("protecting every component reaches nothing") {
  const auto m = build_zoo_model("branched");
  const auto a = vanilla(m.graph);
  std::set<std::string> all;
  for (const auto& c : m.graph.components) all.insert(c.id);
  const auto plan = allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L1), 0.5, all);
  CHECK(plan.removed.empty());
  CHECK(plan.achieved == 0.0);
  CHECK(plan.unreachable);
  CHECK_FALSE(plan.warnings.empty());
}

TEST_CASE("floor keeps one class per slot") {
  // 20 + 15 removable hidden units; 0.99 asks for 34 but the floor allows 33.
  const auto m = build_zoo_model("simple", 3);
  const auto a = vanilla(m.graph);
  const auto plan = allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L1), 0.99);
  CHECK(plan.removable == 35);
  CHECK(plan.removed.size() == 33);
  CHECK(plan.unreachable);
  CHECK_FALSE(plan.warnings.empty());
  const auto pruned = apply_plan(m.graph, m.weights, a, plan);
  CHECK(pruned.report.widths_after.at("a.fc1").out == 1);
  CHECK(pruned.report.widths_after.at("b.fc1").out == 1);
}

TEST_CASE("simple model: removing output 5 of a matches manual slicing") {
  const auto m = build_zoo_model("simple", 5);
  const auto a = vanilla(m.graph);
  const auto pruned = apply_plan(m.graph, m.weights, a, plan_for(a, "a.fc1", Side::Output, 5));
  CHECK(pruned.report.widths_after.at("a.fc1") == LayerWidth{128, 19});
  CHECK(pruned.report.widths_after.at("b.fc1") == LayerWidth{19, 15});
  CHECK(validate_graph(pruned.graph, &pruned.weights).ok());

  auto A = matrix(m.weights, "a.fc1", "weight");
  auto ab = matrix(m.weights, "a.fc1", "bias");
  auto B = matrix(m.weights, "b.fc1", "weight");
  const auto bb = matrix(m.weights, "b.fc1", "bias");
  const auto C = matrix(m.weights, "c.fc1", "weight");
  const auto cb = matrix(m.weights, "c.fc1", "bias");
  A.erase(A.begin() + 5 * 128, A.begin() + 6 * 128);
  ab.erase(ab.begin() + 5);
  for (int r = 14; r >= 0; --r) B.erase(B.begin() + r * 20 + 5);
  CHECK(matrix(pruned.weights, "a.fc1", "weight") == A);
  CHECK(matrix(pruned.weights, "a.fc1", "bias") == ab);
  CHECK(matrix(pruned.weights, "b.fc1", "weight") == B);

  for (const auto& in : random_inputs(m.graph, 10, 77)) {
    const auto& x = in[0].data;
    std::vector<double> h1(19), h2(15);
    for (std::size_t i = 0; i < 19; ++i) {
      double s = ab[i];
      for (std::size_t j = 0; j < 128; ++j) s += static_cast<double>(A[i * 128 + j]) * x[j];
      h1[i] = std::max(s, 0.0);
    }
    for (std::size_t i = 0; i < 15; ++i) {
      double s = bb[i];
      for (std::size_t j = 0; j < 19; ++j) s += static_cast<double>(B[i * 19 + j]) * h1[j];
      h2[i] = std::max(s, 0.0);
    }
    double y = cb[0];
    for (std::size_t j = 0; j < 15; ++j) y += static_cast<double>(C[j]) * h2[j];
    const auto out = execute(pruned.graph, pruned.weights, in).outputs.at(0).data.at(0);
    CHECK(out == doctest::Approx(y).epsilon(1e-5));
  }
}

TEST_CASE("removing a unit whose consumer column is zero keeps outputs") {
  auto m = build_zoo_model("simple", 9);
  auto col = m.weights.mutable_tensor("b.fc1", "weight");
  for (std::size_t r = 0; r < 15; ++r) col[r * 20 + 7] = 0.0f;
  const auto a = vanilla(m.graph);
  const auto pruned = apply_plan(m.graph, m.weights, a, plan_for(a, "a.fc1", Side::Output, 7));
  const auto inputs = random_inputs(m.graph, 10, 5, true);
  CHECK(functional_distance(m.graph, m.weights, pruned.graph, pruned.weights, inputs) <= 1e-6);
  CHECK(pruned.weights.parameter_count() == m.weights.parameter_count() - 129 - 15);
}

TEST_CASE("flatten removal deletes the whole column block") {
  GraphBuilder b;
  auto x = b.input("x", {2, 3, 3});
  b.component("m");
  auto f = b.flatten("m.flat", b.conv("m.conv", x, 2, 4, 1, 1, 0));
  b.output("y", b.linear("m.fc", f, 36, 2));
  const auto g = b.finish();
  const auto w = random_weights(g, 4);
  const auto a = vanilla(g);
  const auto pruned = apply_plan(g, w, a, plan_for(a, "m.conv", Side::Output, 1));
  CHECK(pruned.report.widths_after.at("m.fc") == LayerWidth{27, 2});
  auto W = matrix(w, "m.fc", "weight");
  std::vector<float> expect;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 36; ++c)
      if (c < 9 || c >= 18) expect.push_back(W[r * 36 + c]);
  CHECK(matrix(pruned.weights, "m.fc", "weight") == expect);
}

TEST_CASE("batchnorm statistics are sliced with the channel") {
  const auto m = build_zoo_model("complex_cnn", 2);
  const auto a = vanilla(m.graph);
  std::string bn;
  for (const auto& n : m.graph.nodes)
    if (n.kind == LayerKind::BatchNorm) bn = n.id;
  REQUIRE_FALSE(bn.empty());
  const auto plan = plan_for(a, bn, Side::Output, 0);
  const auto pruned = apply_plan(m.graph, m.weights, a, plan);
  for (const char* t : {"gamma", "beta", "running_mean", "running_var"}) {
    auto before = matrix(m.weights, bn, t);
    before.erase(before.begin());
    CHECK(matrix(pruned.weights, bn, t) == before);
  }
}

TEST_CASE("empty plan is the identity") {
  for (const auto& name : zoo_names()) {
    const auto m = build_zoo_model(name);
    const auto a = aware(m.graph, m.weights);
    const auto pruned = apply_plan(m.graph, m.weights, a, allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L1), 0.0));
    CHECK(pruned.weights == m.weights);
    CHECK(functional_distance(m.graph, m.weights, pruned.graph, pruned.weights, random_inputs(m.graph, 10, 1)) == 0.0);
  }
}

TEST_CASE("pruned parameter count agrees with attrs and report") {
  for (const auto& name : zoo_names()) {
    const auto m = build_zoo_model(name);
    for (const auto& a : {vanilla(m.graph), aware(m.graph, m.weights)}) {
      const auto plan = allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L2), 0.35);
      const auto pruned = apply_plan(m.graph, m.weights, a, plan);
      CAPTURE(name);
      CHECK(pruned.report.params_before == params_from_attrs(m.graph));
      CHECK(pruned.report.params_after == params_from_attrs(pruned.graph));
      CHECK(pruned.report.params_after == pruned.weights.parameter_count());
      CHECK(pruned.report.bytes_after == 4 * pruned.report.params_after);
      CHECK(pruned.report.params_after < pruned.report.params_before);
      CHECK(validate_graph(pruned.graph, &pruned.weights).ok());
    }
  }
}

TEST_CASE("removal order is invariant under global weight scaling") {
  for (const auto& name : {"tdmpc_style", "complex_cnn", "multipath"}) {
    const auto m = build_zoo_model(name, 13);
    for (const auto& a : {vanilla(m.graph), aware(m.graph, m.weights)}) {
      for (auto norm : {Norm::L1, Norm::L2}) {
        const auto base = allocate(m.graph, a, score_groups(m.graph, m.weights, a, norm), 0.4);
        for (float c : {4.0f, 0.5f}) {
          const auto s = allocate(m.graph, a, score_groups(m.graph, scaled(m.weights, c), a, norm), 0.4);
          CHECK(s.removed == base.removed);
          CHECK(s.removals == base.removals);
        }
      }
    }
  }
}

TEST_CASE("sweep at level zero reproduces the unpruned metric") {
  const auto task = toy_task(3, "simple", 64);
  const auto student = build_zoo_model("simple", 4);
  SweepOptions opts;
  opts.levels = {0.0};
  const auto points = sweep(student.graph, student.weights, task.eval, opts);
  REQUIRE(points.size() == 2);
  const double base = task.eval(student.graph, student.weights);
  for (const auto& p : points) {
    CHECK(p.metric == base);
    CHECK(p.params == student.weights.parameter_count());
  }
}

TEST_CASE("sixteen-level sweep shrinks strictly") {
  const auto task = toy_task(3, "simple", 64);
  const auto student = build_zoo_model("simple", 4);
  SweepOptions opts;
  for (int i = 1; i <= 16; ++i) opts.levels.push_back(0.05 * i);
  const auto points = sweep(student.graph, student.weights, task.eval, opts);
  REQUIRE(points.size() == 32);
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(std::isfinite(points[i].metric));
    if (i % 16 == 0) continue;
    CHECK(points[i].mode == points[i - 1].mode);
    CHECK(points[i].params < points[i - 1].params);
    CHECK(points[i].bytes < points[i - 1].bytes);
  }
  const auto csv = curve_csv(points);
  CHECK(csv.rfind("level,mode,metric,params,bytes\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 33);

  opts.parallel = false;
  const auto serial = sweep(student.graph, student.weights, task.eval, opts);
  CHECK(curve_csv(serial) == csv);
}

TEST_CASE("protected encoder keeps its widths") {
  const auto m = build_zoo_model("tdmpc_style", 8);
  for (const auto& a : {vanilla(m.graph), aware(m.graph, m.weights)}) {
    const auto plan = allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L1), 0.4, {"a"});
    const auto pruned = apply_plan(m.graph, m.weights, a, plan);
    CHECK_FALSE(plan.removed.empty());
    for (const auto& [layer, wb] : pruned.report.widths_before)
      if (layer.rfind("a.", 0) == 0) CHECK(pruned.report.widths_after.at(layer) == wb);
  }
}

TEST_CASE("sparsity report json") {
  const auto m = build_zoo_model("simple");
  const auto a = vanilla(m.graph);
  const auto r = apply_plan(m.graph, m.weights, a, allocate(m.graph, a, score_groups(m.graph, m.weights, a, Norm::L1), 0.2)).report;
  const auto j = to_json(r);
  CHECK(j["params_before"] == r.params_before);
  CHECK(j["params_after"] == r.params_after);
  CHECK(j["classes_removed"] == r.classes_removed);
}

// Removing the k lowest-scored classes hurts less than removing the k highest.
// Uses l2: with +-1/sqrt(fan_in) init, l1 row norms grow with fan-in, so the
// l1 minimum sits in narrow bottleneck layers and the property fails there.
TEST_CASE("low-score removal beats high-score removal on trained students") {
  int wins = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto task = toy_task(200 + s, "tdmpc_style", 256);
    const auto init = build_zoo_model("tdmpc_style", 300 + s);
    TrainOptions topts;
    topts.epochs = 4;
    topts.seed = s;
    const auto trained = train(init.graph, init.weights, task.data, topts).weights;
    const auto a = vanilla(init.graph);
    const auto scores = score_groups(init.graph, trained, a, Norm::L2);

    // Independent ranking: each physical class takes its group class score.
    std::vector<double> score(a.physical.classes.size(), -1.0);
    for (const auto& sc : scores)
      for (std::size_t k = 0; k < sc.class_scores.size(); ++k)
        score[a.physical.class_of[a.groups[sc.group].classes[k].front()]] = sc.class_scores[k];
    std::vector<std::size_t> removable;
    for (std::size_t c = 0; c < a.physical.classes.size(); ++c) {
      const bool pinned = std::any_of(a.physical.classes[c].begin(), a.physical.classes[c].end(),
                                      [&](std::size_t atom) { return a.dep.slots[a.dep.locate(atom).first].pinned; });
      if (!pinned) removable.push_back(c);
    }
    std::stable_sort(removable.begin(), removable.end(), [&](auto x, auto y) { return score[x] < score[y]; });
    const std::size_t k = removable.size() / 10;
    // Take k classes in the given order, keeping at least one index per slot.
    auto pick = [&](auto first, auto last) {
      std::vector<std::int64_t> left;
      for (const auto& slot : a.dep.slots) left.push_back(slot.width);
      PruningPlan plan;
      for (auto it = first; it != last && plan.removed.size() < k; ++it) {
        std::map<std::size_t, std::int64_t> take;
        for (auto atom : a.physical.classes[*it]) ++take[a.dep.locate(atom).first];
        if (std::any_of(take.begin(), take.end(), [&](const auto& t) { return left[t.first] - t.second < 1; }))
          continue;
        for (const auto& [slot, n] : take) left[slot] -= n;
        plan.removed.push_back(*it);
      }
      return plan;
    };
    const auto low = pick(removable.begin(), removable.end());
    const auto high = pick(removable.rbegin(), removable.rend());
    REQUIRE(high.removed.size() == k);
    const auto pl = apply_plan(init.graph, trained, a, low);
    const auto ph = apply_plan(init.graph, trained, a, high);
    if (task.eval(pl.graph, pl.weights) <= task.eval(ph.graph, ph.weights)) ++wins;
  }
  CHECK(wins >= 4);
}
