#include "prunegraph/zoo.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "prunegraph/builder.hpp"
#include "prunegraph/error.hpp"
#include "prunegraph/trace.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

const std::vector<std::string>& zoo_names() {
  static const std::vector<std::string> names{"simple",    "branched",    "multipath",
                                              "recursive", "tdmpc_style", "complex_cnn"};
  return names;
}

namespace {

// Linear chain over dims[0] -> dims[1] -> ... named <comp>.fcN / <comp>.actN.
// Every hidden layer gets a ReLU; the last one gets `last` (none when empty).
PortRef mlp(GraphBuilder& b, const std::string& comp, PortRef src, const std::vector<std::int64_t>& dims,
            const std::string& last = "relu", int first = 1) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto n = std::to_string(first + static_cast<int>(i));
    src = b.linear(comp + ".fc" + n, src, dims[i], dims[i + 1]);
    const bool final = i + 2 == dims.size();
    if (!final)
      src = b.activation(comp + ".act" + n, src, "relu");
    else if (!last.empty())
      src = b.activation(comp + ".act" + n, src, last);
  }
  return src;
}

ModelGraph simple() {
  GraphBuilder b;
  auto x = b.input("x", {128});
  b.component("a");
  auto h = mlp(b, "a", x, {128, 20});
  b.component("b");
  h = mlp(b, "b", h, {20, 15});
  b.component("c");
  h = mlp(b, "c", h, {15, 1}, "");
  b.output("y", h);
  return b.finish();
}

ModelGraph branched() {
  GraphBuilder b;
  auto x = b.input("x", {784});
  b.component("a");
  auto za = mlp(b, "a", x, {784, 128, 64});
  b.component("b");
  auto zb = mlp(b, "b", za, {64, 64, 48});
  b.component("c");
  b.output("label", mlp(b, "c", za, {64, 32, 10}, ""));
  b.component("d");
  auto zd = mlp(b, "d", za, {64, 96, 96});
  b.component("e");
  b.output("recon_e", mlp(b, "e", zb, {48, 392}, ""));
  b.component("f");
  b.output("recon_f", mlp(b, "f", zd, {96, 784}, ""));
  return b.finish();
}

// Every interface port feeds exactly one other component: a taps its four
// 64-wide hidden layers for b, c, d and f; f taps its two for e and g.
ModelGraph multipath() {
  GraphBuilder b;
  auto x = b.input("x", {784});
  b.component("a");
  std::vector<PortRef> taps;
  PortRef h = x;
  std::int64_t in = 784;
  for (int i = 1; i <= 4; ++i) {
    h = mlp(b, "a", h, {in, 64}, "relu", i);
    taps.push_back(h);
    in = 64;
  }
  b.component("b");
  b.output("b", mlp(b, "b", taps[0], {64, 64, 32}, ""));
  b.component("c");
  b.output("c", mlp(b, "c", taps[1], {64, 64, 64, 32}, ""));
  b.component("d");
  b.output("d", mlp(b, "d", taps[2], {64, 32}, ""));
  b.component("f");
  auto f1 = mlp(b, "f", taps[3], {64, 64});
  auto f2 = mlp(b, "f", f1, {64, 64}, "relu", 2);
  b.component("e");
  b.output("e", mlp(b, "e", f1, {64, 64, 64, 32}, ""));
  b.component("g");
  b.output("g", mlp(b, "g", f2, {64, 64, 32, 5}, ""));
  return b.finish();
}

ModelGraph recursive() {
  GraphBuilder b;
  auto x = b.input("x", {10});
  b.component("b");
  auto zb = mlp(b, "b", x, {10, 32, 64, 64});
  b.component("c");
  auto state = b.add("c.sum", {zb, {}});
  auto zc = mlp(b, "c", state, {64, 64});
  b.connect(zc, {state.node, 1}, /*recurrent=*/true);
  b.component("d");
  auto zd = mlp(b, "d", zc, {64, 64, 64});
  b.component("a");
  b.output("y", mlp(b, "a", zd, {64, 64, 32, 16, 5}, ""));
  return b.finish();
}

ModelGraph tdmpc_style() {
  GraphBuilder b;
  auto obs = b.input("obs", {784});
  b.component("a");  // encoder
  auto z = mlp(b, "a", obs, {784, 64, 64, 48, 32});
  b.component("b");  // policy
  auto pi = mlp(b, "b", z, {32, 64, 64, 4}, "tanh");
  b.output("pi", pi);
  b.component("c");  // latent dynamics with a recurrent hidden state
  auto za = b.concat("c.cat", {z, {}}, {32, 4});
  b.connect(pi, {za.node, 1}, false, /*conditional=*/true);
  auto h = mlp(b, "c", za, {36, 64});
  auto state = b.add("c.sum", {h, {}});
  auto carried = mlp(b, "c", state, {64, 64, 64, 64}, "relu", 2);
  b.connect(carried, {state.node, 1}, /*recurrent=*/true);
  b.output("z_next", mlp(b, "c", carried, {64, 32}, "", 5));
  b.component("d");  // twin value heads
  auto t = mlp(b, "d", b.concat("d.cat", {z, pi}, {32, 4}), {36, 64, 64, 64});
  b.output("q1", b.linear("d.q1", t, 64, 1));
  b.output("q2", b.linear("d.q2", t, 64, 1));
  return b.finish();
}

ModelGraph complex_cnn() {
  GraphBuilder b;
  auto img = b.input("img", {1, 28, 28});
  b.component("c");  // conv trunk, 28 -> 14 -> 14 -> 7 -> 7 -> 3 -> 3
  auto h = b.conv("c.conv1", img, 1, 8, 3, 2, 1);
  h = b.activation("c.act1", b.batchnorm("c.bn1", h, 8));
  h = b.conv("c.conv2", h, 8, 8, 3, 1, 1);
  h = b.activation("c.act2", b.batchnorm("c.bn2", h, 8));
  h = b.activation("c.act3", b.conv("c.conv3", h, 8, 8, 3, 2, 1));
  h = b.activation("c.act4", b.conv("c.conv4", h, 8, 8, 3, 1, 1));
  auto tap = b.activation("c.act5", b.conv("c.conv5", h, 8, 8, 3, 2, 0));
  h = b.activation("c.act6", b.conv("c.conv6", tap, 8, 16, 3, 1, 1));
  auto zc = mlp(b, "c", b.flatten("c.flat", h), {144, 64}, "relu", 7);
  b.component("a");
  auto za = mlp(b, "a", b.flatten("a.flat", tap), {72, 64});
  b.component("b");
  auto zb = mlp(b, "b", za, {64, 64});
  b.component("d");
  auto d1 = mlp(b, "d", zc, {64, 64});
  auto d2 = mlp(b, "d", d1, {64, 64}, "relu", 2);
  b.component("e");
  auto ze = mlp(b, "e", b.add("e.sum", {zb, d1}), {64, 64});
  b.component("f");
  b.output("f", mlp(b, "f", d2, {64, 64, 32, 16, 2}, ""));
  b.component("g");
  b.output("g", mlp(b, "g", ze, {64, 32, 1}, ""));
  return b.finish();
}

}  // namespace

ZooModel build_zoo_model(const std::string& name, std::uint64_t seed) {
  static const std::map<std::string, std::function<ModelGraph()>> builders{
      {"simple", simple},         {"branched", branched},       {"multipath", multipath},
      {"recursive", recursive},   {"tdmpc_style", tdmpc_style}, {"complex_cnn", complex_cnn}};
  auto it = builders.find(name);
  if (it == builders.end()) throw Error(ErrorKind::InvalidArgument, "unknown zoo model '" + name + "'");
  ZooModel m;
  m.name = name;
  m.graph = it->second();
  m.weights = random_weights(m.graph, seed);
  return m;
}

std::string ComponentSummary::str() const {
  std::string d = std::to_string(depth);
  if (heads > 1) d += "(" + std::to_string(heads) + ")";
  return id + ": (" + d + ", " + std::to_string(in) + "->" + std::to_string(out) + ")";
}

std::vector<ComponentSummary> summarize_components(const ModelGraph& g) {
  const auto order = topo_order(g);
  if (!order) throw Error(ErrorKind::Integrity, "graph has a non-recurrent cycle");
  const ShapeTable shapes = infer_shapes(g);
  auto counts = [&](const LayerNode& n) { return n.kind == LayerKind::Linear || n.kind == LayerKind::Conv2d; };

  std::map<std::string, std::vector<std::string>> preds, succs;
  for (const auto& e : g.edges) {
    const auto* a = g.find_node(e.src.node);
    const auto* b = g.find_node(e.dst.node);
    if (e.recurrent || !a || !b || a->component != b->component) continue;
    preds[b->id].push_back(a->id);
    succs[a->id].push_back(b->id);
  }
  // chain[n]: longest run of counted layers ending at n; entry[n]: where it starts.
  std::map<std::string, int> chain;
  std::map<std::string, std::string> entry;
  for (auto idx : *order) {
    const auto& n = g.nodes[idx];
    int best = 0;
    std::string from;
    for (const auto& p : preds[n.id]) {
      if (chain[p] > best) {
        best = chain[p];
        from = entry[p];
      }
    }
    if (counts(n)) {
      if (best == 0) from = n.id;
      ++best;
    }
    chain[n.id] = best;
    entry[n.id] = from;
  }
  // Terminal counted layers: no counted layer downstream inside the component.
  std::map<std::string, bool> feeds_counted;
  for (auto it = order->rbegin(); it != order->rend(); ++it) {
    const auto& n = g.nodes[*it];
    bool any = false;
    for (const auto& s : succs[n.id]) any = any || feeds_counted[s] || counts(*g.find_node(s));
    feeds_counted[n.id] = any;
  }

  std::vector<ComponentSummary> out;
  for (const auto& c : g.components) {
    ComponentSummary s;
    s.id = c.id;
    s.heads = 0;
    std::string deepest;
    for (auto idx : *order) {
      const auto& n = g.nodes[idx];
      if (n.component != c.id || !counts(n)) continue;
      if (chain[n.id] > s.depth) {
        s.depth = chain[n.id];
        deepest = n.id;
      }
      if (!feeds_counted[n.id]) ++s.heads;
    }
    if (!deepest.empty()) {
      s.in = shapes.at(entry[deepest]).in.at(0)->numel();
      s.out = shapes.at(deepest).out.at(0)->numel();
    }
    s.heads = std::max(s.heads, 1);
    out.push_back(std::move(s));
  }
  return out;
}

std::string component_dims(const ModelGraph& g) {
  std::string out;
  for (const auto& s : summarize_components(g)) {
    if (!out.empty()) out += ", ";
    out += s.str();
  }
  return out;
}

MetricsRow compute_metrics(const ZooModel& model) {
  MetricsRow row;
  row.model = model.name;
  row.components = model.graph.components.size();
  const auto interfaces = trace_interfaces(model.graph, model.weights);
  row.interfaces = interface_count(interfaces);
  row.vanilla = group_stats(extract_groups(build_dependency(model.graph, nullptr, Mode::Vanilla)));
  row.aware = group_stats(extract_groups(build_dependency(model.graph, &interfaces, Mode::ComponentAware)));
  if (!(row.aware.groups > row.vanilla.groups))
    row.violations.push_back("component-aware groups not above vanilla");
  if (!(row.aware.mean_size < row.vanilla.mean_size))
    row.violations.push_back("component-aware mean size not below vanilla");
  if (row.aware.cross != row.interfaces) row.violations.push_back("cross groups differ from traced interface count");
  return row;
}

std::vector<MetricsRow> report_metrics(const std::vector<std::string>& names) {
  std::vector<MetricsRow> rows;
  for (const auto& name : names) rows.push_back(compute_metrics(build_zoo_model(name)));
  return rows;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "model,components,vanilla_groups,aware_groups,vanilla_avg,aware_avg,cross\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.components << ',' << r.vanilla.groups << ',' << r.aware.groups << ','
       << fixed2(r.vanilla.mean_size) << ',' << fixed2(r.aware.mean_size) << ',' << r.aware.cross << '\n';
  }
  return os.str();
}

std::string metrics_markdown(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "| Model | Components | Groups (vanilla) | Groups (comp-aware) | Avg size (vanilla) | Avg size (comp-aware) "
        "| Cross-comp groups |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.model << " | " << r.components << " | " << r.vanilla.groups << " | " << r.aware.groups << " | "
       << fixed2(r.vanilla.mean_size) << " | " << fixed2(r.aware.mean_size) << " | " << r.aware.cross << " |\n";
  }
  return os.str();
}

}  // namespace prunegraph
