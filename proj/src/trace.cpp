#include "prunegraph/trace.hpp"

#include <algorithm>
#include <deque>

#include "prunegraph/error.hpp"

namespace prunegraph {

std::size_t ComponentDependencyMatrix::index(const std::string& id) const {
  auto it = std::lower_bound(components.begin(), components.end(), id);
  if (it == components.end() || *it != id) throw Error(ErrorKind::InvalidArgument, "unknown component '" + id + "'");
  return static_cast<std::size_t>(it - components.begin());
}

bool ComponentDependencyMatrix::at(const std::string& from, const std::string& to) const {
  return used[index(from)][index(to)];
}

std::size_t ComponentDependencyMatrix::cross_count() const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < used.size(); ++p)
    for (std::size_t q = 0; q < used.size(); ++q)
      if (p != q && used[p][q]) ++n;
  return n;
}

namespace {

const std::string* component_of(const ModelGraph& g, const std::string& node) {
  const auto* n = g.find_node(node);
  return n ? &n->component : nullptr;
}

}  // namespace

std::vector<TraceRecord> trace_all_branches(const ModelGraph& g, const WeightStore& w, int unroll,
                                            std::uint64_t seed) {
  const bool conditional = std::any_of(g.edges.begin(), g.edges.end(), [](const Edge& e) { return e.conditional; });
  const auto inputs = random_inputs(g, 1, seed);
  std::vector<TraceRecord> traces;
  for (bool branch : {true, false}) {
    if (!branch && !conditional) break;
    ExecOptions opts;
    opts.unroll = unroll;
    opts.branch = branch;
    opts.record = false;
    traces.push_back(execute(g, w, inputs.front(), opts).trace);
  }
  return traces;
}

ComponentDependencyMatrix refine_candidates(const ModelGraph& g, const std::vector<TraceRecord>& traces) {
  if (traces.empty()) throw Error(ErrorKind::InvalidArgument, "refine_candidates needs at least one trace");
  ComponentDependencyMatrix m;
  for (const auto& c : g.components) m.components.push_back(c.id);
  std::sort(m.components.begin(), m.components.end());
  // Candidate graph: all n^2 pairs, then keep only those a trace exercised.
  const std::size_t n = m.components.size();
  std::vector<std::vector<bool>> candidate(n, std::vector<bool>(n, true));
  m.used.assign(n, std::vector<bool>(n, false));

  std::set<std::size_t> fired;
  for (const auto& t : traces) fired.insert(t.fired_edges.begin(), t.fired_edges.end());
  for (auto eidx : fired) {
    const Edge& e = g.edges.at(eidx);
    const auto* from = component_of(g, e.src.node);
    const auto* to = component_of(g, e.dst.node);
    if (!from || !to) continue;  // graph inputs belong to no component
    const auto p = m.index(*from), q = m.index(*to);
    if (p == q && !e.recurrent) continue;
    if (candidate[p][q]) m.used[p][q] = true;
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (g.edges[e].conditional && !fired.count(e))
      m.warnings.push_back("conditional edge " + edge_id(g.edges[e]) + " never fired in any trace");
  }
  return m;
}

InterfaceMap infer_interfaces(const ModelGraph& g, const ComponentDependencyMatrix& m,
                              const std::vector<TraceRecord>& traces) {
  InterfaceMap out;
  for (const auto& c : g.components) out[c.id];
  std::set<std::size_t> fired;
  for (const auto& t : traces) fired.insert(t.fired_edges.begin(), t.fired_edges.end());
  for (auto eidx : fired) {
    const Edge& e = g.edges.at(eidx);
    const auto* from = component_of(g, e.src.node);
    const auto* to = component_of(g, e.dst.node);
    if (!from || !to || *from == *to) continue;
    if (!m.at(*from, *to)) continue;
    out[*from].outputs.insert(e.src);
    out[*to].inputs.insert(e.dst);
  }
  for (const auto& c : g.components) {
    const auto& seen = out[c.id];
    auto check = [&](const std::vector<PortRef>& declared, const std::set<PortRef>& observed, const char* side) {
      if (declared.empty()) return;
      const std::set<PortRef> decl(declared.begin(), declared.end());
      if (decl == observed) return;
      std::string detail;
      for (const auto& p : decl)
        if (!observed.count(p)) detail += " declared-but-unobserved " + to_string(p);
      for (const auto& p : observed)
        if (!decl.count(p)) detail += " observed-but-undeclared " + to_string(p);
      throw Error(ErrorKind::DeclarationConflict, "component '" + c.id + "' " + side + ":" + detail);
    };
    check(c.declared_inputs, seen.inputs, "inputs");
    check(c.declared_outputs, seen.outputs, "outputs");
  }
  return out;
}

std::vector<std::string> untrainable_layers(const ModelGraph& g, const std::vector<TraceRecord>& traces) {
  std::set<std::size_t> fired;
  for (const auto& t : traces) fired.insert(t.fired_edges.begin(), t.fired_edges.end());
  std::map<std::string, std::vector<std::string>> fwd, bwd;
  for (auto eidx : fired) {
    const Edge& e = g.edges.at(eidx);
    fwd[e.src.node].push_back(e.dst.node);
    bwd[e.dst.node].push_back(e.src.node);
  }
  auto sweep = [](std::deque<std::string> frontier, std::map<std::string, std::vector<std::string>>& adj) {
    std::set<std::string> seen(frontier.begin(), frontier.end());
    while (!frontier.empty()) {
      auto cur = frontier.front();
      frontier.pop_front();
      for (const auto& nxt : adj[cur])
        if (seen.insert(nxt).second) frontier.push_back(nxt);
    }
    return seen;
  };
  std::deque<std::string> entries, exits;
  for (const auto& in : g.inputs) entries.push_back(in.id);
  for (const auto& o : g.outputs) exits.push_back(o.src.node);
  const auto from_entry = sweep(entries, fwd);
  const auto to_exit = sweep(exits, bwd);
  std::vector<std::string> dead;
  for (const auto& n : g.nodes) {
    if (is_parameterized(n.kind) && !(from_entry.count(n.id) && to_exit.count(n.id))) dead.push_back(n.id);
  }
  return dead;
}

InterfaceMap trace_interfaces(const ModelGraph& g, const WeightStore& w, int unroll, std::uint64_t seed) {
  const auto traces = trace_all_branches(g, w, unroll, seed);
  return infer_interfaces(g, refine_candidates(g, traces), traces);
}

std::size_t interface_count(const InterfaceMap& interfaces) {
  std::size_t n = 0;
  for (const auto& [id, ifc] : interfaces) n += ifc.outputs.size();
  return n;
}

nlohmann::json trace_to_json(const ModelGraph& g, const TraceRecord& trace) {
  nlohmann::json j;
  j["unroll_steps"] = trace.unroll_steps;
  j["branch"] = trace.branch;
  j["fired_edges"] = nlohmann::json::array();
  for (auto e : trace.fired_edges) {
    j["fired_edges"].push_back({{"edge", edge_id(g.edges.at(e))}, {"steps", trace.fired_steps.at(e)}});
  }
  j["shapes"] = nlohmann::json::object();
  for (const auto& [node, specs] : trace.observed_in) {
    nlohmann::json ins = nlohmann::json::array(), outs = nlohmann::json::array();
    for (const auto& s : specs) ins.push_back(s.shape);
    for (const auto& s : trace.observed_out.at(node)) outs.push_back(s.shape);
    j["shapes"][node] = {{"in", ins}, {"out", outs}};
  }
  return j;
}

}  // namespace prunegraph
