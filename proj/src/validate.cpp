#include "prunegraph/validate.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "prunegraph/error.hpp"

namespace prunegraph {

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Integrity: return "integrity";
    case ViolationKind::Attr: return "attr";
    case ViolationKind::Unconnected: return "unconnected";
    case ViolationKind::ShapeMismatch: return "shape-mismatch";
    case ViolationKind::Cycle: return "cycle";
    case ViolationKind::Output: return "output";
    case ViolationKind::Interface: return "interface";
    case ViolationKind::Manifest: return "manifest";
  }
  return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& v : violations) os << "[" << to_string(v.kind) << "] " << v.subject << ": " << v.message << "\n";
  return os.str();
}

std::optional<std::vector<std::size_t>> topo_order(const ModelGraph& g) {
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto& e : g.edges) {
    if (e.recurrent) continue;
    auto s = g.node_index(e.src.node);
    auto d = g.node_index(e.dst.node);
    if (!s || !d) continue;
    succ[*s].push_back(*d);
    ++indegree[*d];
  }
  // Lowest index first keeps the order stable for a given node sequence.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.insert(i);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const auto i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (auto j : succ[i]) {
      if (--indegree[j] == 0) ready.insert(j);
    }
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

namespace {

bool spec_ok(const TensorSpec& s) {
  return (s.rank() == 1 || s.rank() == 3) &&
         std::all_of(s.shape.begin(), s.shape.end(), [](std::int64_t d) { return d >= 1; });
}

void add(ValidationReport* r, ViolationKind k, std::string subject, std::string msg) {
  if (r) r->violations.push_back({k, std::move(subject), std::move(msg)});
}

void check_attrs(const LayerNode& n, ValidationReport* r) {
  const auto& a = n.attrs;
  auto need = [&](std::int64_t v, const char* name, std::int64_t min = 1) {
    if (v < min) add(r, ViolationKind::Attr, n.id, std::string("attr '") + name + "' must be >= " + std::to_string(min));
  };
  switch (n.kind) {
    case LayerKind::Linear:
      need(a.in_dim, "in_dim");
      need(a.out_dim, "out_dim");
      break;
    case LayerKind::Conv2d:
      need(a.in_ch, "in_ch");
      need(a.out_ch, "out_ch");
      need(a.kernel, "kernel");
      need(a.stride, "stride");
      need(a.padding, "padding", 0);
      break;
    case LayerKind::BatchNorm:
      need(a.channels, "channels");
      break;
    case LayerKind::Activation:
      if (a.activation != "relu" && a.activation != "tanh" && a.activation != "sigmoid")
        add(r, ViolationKind::Attr, n.id, "unsupported activation '" + a.activation + "'");
      break;
    case LayerKind::Concat:
    case LayerKind::Split:
      if (a.sizes.size() < 2) add(r, ViolationKind::Attr, n.id, "needs at least two explicit sizes");
      for (auto s : a.sizes)
        if (s < 1) add(r, ViolationKind::Attr, n.id, "sizes must be positive");
      break;
    case LayerKind::Add:
      need(a.arity, "arity", 2);
      break;
    case LayerKind::Flatten:
    case LayerKind::Identity:
      break;
  }
}

std::string mismatch(const TensorSpec& got, const std::string& want) {
  return "producer gives " + to_string(got) + ", consumer expects " + want;
}

// Output specs from (possibly partially unknown) input specs. Unknown inputs
// come from recurrent edges whose producer has not been visited yet.
std::vector<std::optional<TensorSpec>> forward_spec(const LayerNode& n, std::vector<std::optional<TensorSpec>>& in,
                                                    const std::vector<const Edge*>& feeders, ValidationReport* r) {
  const auto& a = n.attrs;
  std::vector<std::optional<TensorSpec>> out(n.num_outputs());
  auto subject = [&](std::size_t port) { return feeders[port] ? edge_id(*feeders[port]) : n.id; };
  auto first_known = [&]() -> std::optional<TensorSpec> {
    for (const auto& s : in)
      if (s) return s;
    return std::nullopt;
  };
  switch (n.kind) {
    case LayerKind::Linear: {
      if (in[0] && !(in[0]->rank() == 1 && in[0]->shape[0] == a.in_dim))
        add(r, ViolationKind::ShapeMismatch, subject(0), mismatch(*in[0], "[" + std::to_string(a.in_dim) + "]"));
      if (!in[0]) in[0] = TensorSpec{{a.in_dim}};
      out[0] = TensorSpec{{a.out_dim}};
      break;
    }
    case LayerKind::Conv2d: {
      if (!in[0]) break;
      const auto& s = *in[0];
      if (s.rank() != 3 || s.shape[0] != a.in_ch) {
        add(r, ViolationKind::ShapeMismatch, subject(0),
            mismatch(s, "[" + std::to_string(a.in_ch) + "xHxW]"));
        break;
      }
      const auto oh = (s.shape[1] + 2 * a.padding - a.kernel);
      const auto ow = (s.shape[2] + 2 * a.padding - a.kernel);
      if (oh < 0 || ow < 0 || a.stride < 1) {
        add(r, ViolationKind::ShapeMismatch, subject(0), "kernel larger than padded input " + to_string(s));
        break;
      }
      out[0] = TensorSpec{{a.out_ch, oh / a.stride + 1, ow / a.stride + 1}};
      break;
    }
    case LayerKind::BatchNorm: {
      if (in[0] && in[0]->shape[0] != a.channels)
        add(r, ViolationKind::ShapeMismatch, subject(0),
            mismatch(*in[0], std::to_string(a.channels) + " channels"));
      out[0] = in[0];
      break;
    }
    case LayerKind::Activation:
    case LayerKind::Identity:
      out[0] = in[0];
      break;
    case LayerKind::Flatten: {
      if (!in[0]) break;
      if (in[0]->rank() != 3) {
        add(r, ViolationKind::ShapeMismatch, subject(0), mismatch(*in[0], "a rank-3 tensor"));
        break;
      }
      out[0] = TensorSpec{{in[0]->numel()}};
      break;
    }
    case LayerKind::Add: {
      auto ref = first_known();
      if (!ref) break;
      for (std::size_t p = 0; p < in.size(); ++p) {
        if (!in[p]) {
          in[p] = ref;
        } else if (*in[p] != *ref) {
          add(r, ViolationKind::ShapeMismatch, subject(p), mismatch(*in[p], to_string(*ref) + " (other addend)"));
        }
      }
      out[0] = ref;
      break;
    }
    case LayerKind::Concat: {
      auto ref = first_known();
      if (!ref) break;
      for (std::size_t p = 0; p < in.size(); ++p) {
        TensorSpec want = *ref;
        want.shape[0] = a.sizes[p];
        if (!in[p]) {
          in[p] = want;
        } else if (*in[p] != want) {
          add(r, ViolationKind::ShapeMismatch, subject(p), mismatch(*in[p], to_string(want)));
        }
      }
      TensorSpec o = *ref;
      o.shape[0] = std::accumulate(a.sizes.begin(), a.sizes.end(), std::int64_t{0});
      out[0] = o;
      break;
    }
    case LayerKind::Split: {
      if (!in[0]) break;
      const auto total = std::accumulate(a.sizes.begin(), a.sizes.end(), std::int64_t{0});
      if (in[0]->shape[0] != total) {
        add(r, ViolationKind::ShapeMismatch, subject(0), mismatch(*in[0], std::to_string(total) + " channels"));
        break;
      }
      for (std::size_t p = 0; p < out.size(); ++p) {
        TensorSpec o = *in[0];
        o.shape[0] = a.sizes[p];
        out[p] = o;
      }
      break;
    }
  }
  return out;
}

}  // namespace

ShapeTable infer_shapes(const ModelGraph& g, ValidationReport* report) {
  ShapeTable table;
  std::map<PortRef, std::vector<const Edge*>> feeders;
  for (const auto& e : g.edges) feeders[e.dst].push_back(&e);

  for (const auto& n : g.nodes) {
    NodeShapes& s = table[n.id];
    s.in.assign(n.num_inputs(), std::nullopt);
    s.out.assign(n.num_outputs(), std::nullopt);
  }
  auto order = topo_order(g);
  if (!order) {
    add(report, ViolationKind::Cycle, "graph", "cycle through non-recurrent edges");
    return table;
  }
  auto producer_spec = [&](const PortRef& src) -> std::optional<TensorSpec> {
    if (const auto* in = g.find_input(src.node)) return in->spec;
    auto it = table.find(src.node);
    if (it == table.end() || src.port < 0 || static_cast<std::size_t>(src.port) >= it->second.out.size())
      return std::nullopt;
    return it->second.out[src.port];
  };

  for (auto idx : *order) {
    const auto& n = g.nodes[idx];
    NodeShapes& s = table[n.id];
    std::vector<const Edge*> port_edges(n.num_inputs(), nullptr);
    for (std::size_t p = 0; p < n.num_inputs(); ++p) {
      auto it = feeders.find(PortRef{n.id, static_cast<int>(p)});
      if (it == feeders.end() || it->second.empty()) {
        add(report, ViolationKind::Unconnected, to_string(PortRef{n.id, static_cast<int>(p)}),
            "input port has no incoming edge");
        continue;
      }
      if (it->second.size() > 1)
        add(report, ViolationKind::Integrity, to_string(PortRef{n.id, static_cast<int>(p)}),
            "input port has more than one incoming edge");
      port_edges[p] = it->second.front();
      if (!port_edges[p]->recurrent) s.in[p] = producer_spec(port_edges[p]->src);
    }
    s.out = forward_spec(n, s.in, port_edges, report);
  }

  // Recurrent edges are checked once every producer is known.
  for (const auto& e : g.edges) {
    if (!e.recurrent) continue;
    auto got = producer_spec(e.src);
    auto it = table.find(e.dst.node);
    if (!got || it == table.end()) continue;
    const auto& want = it->second.in.at(static_cast<std::size_t>(e.dst.port));
    if (!want) {
      it->second.in[e.dst.port] = got;
    } else if (*got != *want) {
      add(report, ViolationKind::ShapeMismatch, edge_id(e), mismatch(*got, to_string(*want)));
    }
  }
  return table;
}

ValidationReport validate_graph(const ModelGraph& g, const WeightStore* weights) {
  ValidationReport r;
  std::set<std::string> ids;
  for (const auto& n : g.nodes)
    if (!ids.insert(n.id).second) add(&r, ViolationKind::Integrity, n.id, "duplicate id");
  for (const auto& in : g.inputs) {
    if (!ids.insert(in.id).second) add(&r, ViolationKind::Integrity, in.id, "duplicate id");
    if (!spec_ok(in.spec)) add(&r, ViolationKind::Attr, in.id, "input spec must be rank 1 or 3 with positive dims");
  }
  std::set<std::string> comps;
  for (const auto& c : g.components)
    if (!comps.insert(c.id).second) add(&r, ViolationKind::Integrity, c.id, "duplicate component id");
  for (const auto& n : g.nodes) {
    if (!comps.count(n.component))
      add(&r, ViolationKind::Integrity, n.id, "undeclared component '" + n.component + "'");
    check_attrs(n, &r);
  }
  bool dangling = false;
  for (const auto& e : g.edges) {
    const bool src_ok = g.find_input(e.src.node) ? e.src.port == 0
                                                  : (g.find_node(e.src.node) && e.src.port >= 0 &&
                                                     static_cast<std::size_t>(e.src.port) <
                                                         g.find_node(e.src.node)->num_outputs());
    const auto* dn = g.find_node(e.dst.node);
    const bool dst_ok = dn && e.dst.port >= 0 && static_cast<std::size_t>(e.dst.port) < dn->num_inputs();
    if (!src_ok || !dst_ok) {
      add(&r, ViolationKind::Integrity, edge_id(e), "dangling edge");
      dangling = true;
    }
    if (g.find_input(e.src.node) && e.recurrent)
      add(&r, ViolationKind::Integrity, edge_id(e), "graph inputs cannot feed recurrent edges");
  }
  for (const auto& c : g.components) {
    for (const auto* list : {&c.declared_inputs, &c.declared_outputs}) {
      for (const auto& p : *list) {
        const auto* n = g.find_node(p.node);
        if (!n || n->component != c.id)
          add(&r, ViolationKind::Interface, c.id, "declared interface " + to_string(p) + " is not inside the component");
      }
    }
  }
  if (dangling) return r;

  const auto shapes = infer_shapes(g, &r);
  for (const auto& o : g.outputs) {
    std::optional<TensorSpec> got;
    if (const auto* in = g.find_input(o.src.node)) {
      got = in->spec;
    } else if (auto it = shapes.find(o.src.node); it != shapes.end() && o.src.port >= 0 &&
                                                   static_cast<std::size_t>(o.src.port) < it->second.out.size()) {
      got = it->second.out[o.src.port];
    } else {
      add(&r, ViolationKind::Integrity, o.id, "output references a missing port");
      continue;
    }
    if (got && *got != o.spec) add(&r, ViolationKind::Output, o.id, mismatch(*got, to_string(o.spec)));
  }
  if (weights) {
    for (auto& msg : check_weights(g, *weights)) add(&r, ViolationKind::Manifest, "weights", std::move(msg));
  }
  return r;
}

void require_valid(const ModelGraph& g, const WeightStore* weights) {
  auto report = validate_graph(g, weights);
  if (!report.ok()) throw Error(ErrorKind::Integrity, "graph failed validation:\n" + report.summary());
}

}  // namespace prunegraph
