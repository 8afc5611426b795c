#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "prunegraph/error.hpp"
#include "prunegraph/executor.hpp"
#include "prunegraph/zoo.hpp"

using namespace prunegraph;

namespace {

WeightStore scaled(const WeightStore& w, float factor) {
  auto blob = w.blob();
  for (auto& v : blob) v *= factor;
  return WeightStore(w.manifest(), std::move(blob));
}

}  // namespace

TEST_CASE("identity layer passes its input through") {
  GraphBuilder b;
  auto x = b.input("x", {5});
  b.component("m");
  b.output("y", b.identity("m.id", x));
  const auto g = b.finish();
  Tensor in(TensorSpec{{5}}, {1, -2, 3, -4, 5});
  const auto r = execute(g, WeightStore{}, {in});
  CHECK(r.outputs.at(0) == in);
  CHECK(r.trace.fired_edges == std::set<std::size_t>{0});
}

TEST_CASE("a zero network outputs zeros") {
  const auto m = build_zoo_model("simple");
  const auto zero = scaled(m.weights, 0.0f);
  for (const auto& in : random_inputs(m.graph, 3, 5)) {
    const auto r = execute(m.graph, zero, in);
    REQUIRE(r.outputs.size() == 1);
    CHECK(r.outputs[0].data == std::vector<float>{0.0f});
  }
}

TEST_CASE("recursive model lineage matches a hand unroll of two steps") {
  const auto m = build_zoo_model("recursive");
  const auto& g = m.graph;
  const auto in = random_inputs(g, 1, 3).front();
  ExecOptions opts;
  opts.unroll = 2;
  const auto r = execute(g, m.weights, in, opts);

  std::size_t rec = g.edges.size();
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    if (g.edges[e].recurrent) rec = e;
  REQUIRE(rec < g.edges.size());
  CHECK(r.trace.fired_edges.count(rec) == 1);
  CHECK(r.trace.fired_steps.at(rec) == std::vector<int>{1});

  // Independent unroll: parents of (node, t) along graph edges.
  std::function<std::set<TensorKey>(const std::string&, int)> ancestry = [&](const std::string& node, int t) {
    std::set<TensorKey> out;
    for (const auto& e : g.edges) {
      if (e.dst.node != node || g.find_input(e.src.node)) continue;
      const int st = e.recurrent ? t - 1 : t;
      if (st < 0) continue;
      out.insert(TensorKey{e.src, st});
      const auto up = ancestry(e.src.node, st);
      out.insert(up.begin(), up.end());
    }
    return out;
  };
  for (int t = 0; t < 2; ++t)
    for (const auto& n : g.nodes) {
      CAPTURE(n.id);
      CHECK(r.trace.lineage.at(TensorKey{{n.id, 0}, t}) == ancestry(n.id, t));
    }
  // Two generations of the loop body feed the second step.
  const auto& last = r.trace.lineage.at(TensorKey{{"c.act1", 0}, 1});
  CHECK(last.count(TensorKey{{"c.act1", 0}, 0}) == 1);
  CHECK(last.count(TensorKey{{"c.fc1", 0}, 1}) == 1);
  CHECK(r.trace.lineage.at(TensorKey{{"c.act1", 0}, 0}).count(TensorKey{{"c.act1", 0}, 1}) == 0);
}

TEST_CASE("execution is deterministic and the parallel path matches the serial one") {
  for (const auto& name : zoo_names()) {
    CAPTURE(name);
    const auto m = build_zoo_model(name);
    const auto in = random_inputs(m.graph, 1, 9).front();
    ExecOptions serial;
    serial.parallel = false;
    ExecOptions parallel;
    parallel.parallel = true;
    const auto a = execute(m.graph, m.weights, in, serial).outputs;
    const auto b = execute(m.graph, m.weights, in, parallel).outputs;
    const auto c = execute(m.graph, m.weights, in, parallel).outputs;
    CHECK(a == b);
    CHECK(b == c);
  }
}

TEST_CASE("conditional edges carry data only when the branch is taken") {
  const auto m = build_zoo_model("tdmpc_style");
  std::size_t cond = m.graph.edges.size();
  for (std::size_t e = 0; e < m.graph.edges.size(); ++e)
    if (m.graph.edges[e].conditional) cond = e;
  REQUIRE(cond < m.graph.edges.size());
  const auto in = random_inputs(m.graph, 1, 2).front();
  ExecOptions on, off;
  off.branch = false;
  const auto a = execute(m.graph, m.weights, in, on);
  const auto b = execute(m.graph, m.weights, in, off);
  CHECK(a.trace.fired_edges.count(cond) == 1);
  CHECK(b.trace.fired_edges.count(cond) == 0);
  CHECK(concat_outputs(a.outputs) != concat_outputs(b.outputs));
}

TEST_CASE("functional distance") {
  const auto m = build_zoo_model("simple");
  const auto inputs = random_inputs(m.graph, 10, 4, /*unit_norm=*/true);
  CHECK(functional_distance(m.graph, m.weights, m.graph, m.weights, inputs) == 0.0);

  auto blob = m.weights.blob();
  blob[0] += 1e-9f;
  const WeightStore bumped(m.weights.manifest(), blob);
  // Lipschitz bound: |dW| * |x| through two ReLU layers of bounded norm; far below 1e-6.
  CHECK(functional_distance(m.graph, m.weights, m.graph, bumped, inputs) < 1e-6);
}

TEST_CASE("execute rejects wrong inputs and non-finite outputs") {
  const auto m = build_zoo_model("simple");
  Tensor wrong(TensorSpec{{127}});
  CHECK_THROWS_AS(execute(m.graph, m.weights, {wrong}), Error);
  try {
    execute(m.graph, m.weights, {wrong});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }

  auto blob = m.weights.blob();
  for (auto& v : blob) v = 1e30f;
  const WeightStore huge(m.weights.manifest(), blob);
  const auto in = random_inputs(m.graph, 1, 1).front();
  try {
    execute(m.graph, huge, in);
    FAIL("expected a non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

TEST_CASE("random inputs are seeded and optionally unit norm") {
  const auto g = build_zoo_model("branched").graph;
  CHECK(random_inputs(g, 2, 11)[1][0] == random_inputs(g, 2, 11)[1][0]);
  CHECK(random_inputs(g, 1, 11)[0][0] != random_inputs(g, 1, 12)[0][0]);
  double n2 = 0;
  const auto unit = random_inputs(g, 1, 3, true);
  for (float v : unit[0][0].data) n2 += static_cast<double>(v) * v;
  CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-6));
}
