#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "prunegraph/error.hpp"
#include "prunegraph/io.hpp"
#include "prunegraph/plot.hpp"
#include "prunegraph/train.hpp"
#include "prunegraph/validate.hpp"
#include "prunegraph/zoo.hpp"

using namespace prunegraph;

TEST_CASE("zoo component dims") {
  CHECK(component_dims(build_zoo_model("simple").graph) == "a: (1, 128->20), b: (1, 20->15), c: (1, 15->1)");
  const auto multipath = summarize_components(build_zoo_model("multipath").graph);
  REQUIRE(multipath.size() == 7);
  CHECK(multipath[0].str() == "a: (4, 784->64)");
  const auto tdmpc = summarize_components(build_zoo_model("tdmpc_style").graph);
  CHECK(tdmpc[3].str() == "d: (4(2), 36->1)");
  CHECK(tdmpc[3].heads == 2);
}

TEST_CASE("zoo models are deterministic per seed and valid") {
  for (const auto& name : zoo_names()) {
    CAPTURE(name);
    const auto a = build_zoo_model(name, 21);
    const auto b = build_zoo_model(name, 21);
    CHECK(a.weights == b.weights);
    CHECK(graph_to_json(a.graph).dump() == graph_to_json(b.graph).dump());
    CHECK_FALSE(build_zoo_model(name, 22).weights == a.weights);
    CHECK(validate_graph(a.graph, &a.weights).ok());
  }
  CHECK_THROWS_AS(build_zoo_model("resnet"), Error);
}

TEST_CASE("recurrent and conditional edges where expected") {
  auto has = [](const ModelGraph& g, bool Edge::*flag) {
    return std::any_of(g.edges.begin(), g.edges.end(), [&](const Edge& e) { return e.*flag; });
  };
  CHECK(has(build_zoo_model("recursive").graph, &Edge::recurrent));
  CHECK(has(build_zoo_model("tdmpc_style").graph, &Edge::recurrent));
  CHECK(has(build_zoo_model("tdmpc_style").graph, &Edge::conditional));
  CHECK_FALSE(has(build_zoo_model("simple").graph, &Edge::recurrent));
}

TEST_CASE("metrics report is reproducible and flags nothing") {
  const auto rows = report_metrics(zoo_names());
  REQUIRE(rows.size() == 6);
  const std::vector<std::size_t> cross{2, 3, 6, 3, 2, 7};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].aware.cross == cross[i]);
    CHECK(rows[i].interfaces == cross[i]);
    CHECK(rows[i].violations.empty());
  }
  CHECK(rows[3].aware.mean_size < 4.47);
  CHECK(metrics_csv(rows) == metrics_csv(report_metrics(zoo_names())));
  const auto md = metrics_markdown(rows);
  CHECK(md.find("| simple |") != std::string::npos);
}

TEST_CASE("toy task: teacher scores zero, zero student scores the teacher norm") {
  const auto task = toy_task(5, "tdmpc_style", 32);
  CHECK(task.data.inputs.size() == 32);
  CHECK(task.eval(task.teacher.graph, task.teacher.weights) == 0.0);

  // Independent value: mean of ||teacher(x)||^2 recomputed from execute.
  double expect = 0.0;
  for (const auto& in : task.data.inputs) {
    ExecOptions o;
    o.unroll = 2;
    for (float v : concat_outputs(execute(task.teacher.graph, task.teacher.weights, in, o).outputs))
      expect += static_cast<double>(v) * v;
  }
  expect /= 32.0;
  const auto zero = WeightStore(task.teacher.weights.manifest(),
                                std::vector<float>(task.teacher.weights.parameter_count(), 0.0f));
  CHECK(task.eval(task.teacher.graph, zero) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(toy_task(5, "tdmpc_style", 32).data.targets == task.data.targets);
}

TEST_CASE("loss gradient matches finite differences") {
  const auto task = toy_task(6, "tdmpc_style", 8);
  const auto student = build_zoo_model("tdmpc_style", 7);
  const std::vector<std::size_t> samples{0, 1, 2, 3, 4, 5, 6, 7};
  const auto grad = loss_gradient(student.graph, student.weights, task.data, samples);
  REQUIRE(grad.size() == student.weights.parameter_count());

  const auto& man = student.weights.manifest();
  for (const std::string layer : {"a.fc1", "c.fc2", "d.q2", "b.fc3"}) {
    const auto& e = man.at(layer).at("weight");
    for (std::size_t probe : {std::size_t{0}, static_cast<std::size_t>(e.numel() / 2)}) {
      const std::size_t idx = static_cast<std::size_t>(e.offset / sizeof(float)) + probe;
      const double h = 1e-2;
      auto plus = student.weights.blob();
      auto minus = plus;
      plus[idx] += static_cast<float>(h);
      minus[idx] -= static_cast<float>(h);
      const double lp = dataset_loss(student.graph, WeightStore(man, plus), task.data);
      const double lm = dataset_loss(student.graph, WeightStore(man, minus), task.data);
      const double fd = (lp - lm) / (2 * h);
      CAPTURE(layer);
      CHECK(grad[idx] == doctest::Approx(fd).epsilon(1e-2).scale(1e-3));
    }
  }
}

TEST_CASE("training lowers the loss deterministically") {
  const auto task = toy_task(8, "simple", 128);
  const auto student = build_zoo_model("simple", 9);
  TrainOptions opts;
  opts.epochs = 3;
  const auto r1 = train(student.graph, student.weights, task.data, opts);
  REQUIRE(r1.epoch_loss.size() == 3);
  CHECK(r1.epoch_loss.back() < dataset_loss(student.graph, student.weights, task.data));
  opts.parallel = false;
  CHECK(train(student.graph, student.weights, task.data, opts).weights == r1.weights);
  CHECK_THROWS_AS(train(build_zoo_model("complex_cnn").graph, build_zoo_model("complex_cnn").weights,
                        toy_task(1, "complex_cnn", 4).data, opts),
                  Error);
}

TEST_CASE("curve svg draws one line per mode") {
  std::vector<CurvePoint> pts;
  for (auto mode : {Mode::Vanilla, Mode::ComponentAware})
    for (int i = 0; i < 4; ++i) pts.push_back({0.1 * i, mode, 1.0 + i, 100, 400, 0.1 * i});
  const auto svg = curve_svg(pts, "loss");
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t lines = 0;
  for (auto at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++lines;
  CHECK(lines == 2);
}
