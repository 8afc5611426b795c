#include "prunegraph/dependency.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

#include "prunegraph/error.hpp"
#include "prunegraph/kernels.hpp"
#include "prunegraph/union_find.hpp"

namespace prunegraph {

const char* to_string(Side side) { return side == Side::Input ? "in" : "out"; }

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::PruneRows: return "prune_rows";
    case Scheme::PruneCols: return "prune_cols";
    case Scheme::Coupled: return "coupled";
    case Scheme::None: return "none";
  }
  return "none";
}

const char* to_string(Origin origin) {
  switch (origin) {
    case Origin::D1: return "d1";
    case Origin::D2: return "d2";
    case Origin::DI: return "DI";
    case Origin::DX: return "DX";
  }
  return "?";
}

const char* to_string(Mode mode) { return mode == Mode::Vanilla ? "vanilla" : "component-aware"; }

std::optional<Mode> parse_mode(const std::string& name) {
  if (name == "vanilla") return Mode::Vanilla;
  if (name == "component-aware" || name == "component_aware") return Mode::ComponentAware;
  return std::nullopt;
}

const char* to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::Intra: return "intra";
    case GroupKind::Spanning: return "spanning";
    case GroupKind::Cross: return "cross";
  }
  return "?";
}

std::pair<std::int64_t, std::int64_t> IndexMap::image(std::int64_t i) const {
  switch (kind) {
    case Kind::Identity: return {i, i + 1};
    case Kind::ConcatOffset:
    case Kind::SplitOffset: return {i + offset, i + offset + 1};
    case Kind::FlattenExpand: return {i * h * w, (i + 1) * h * w};
  }
  return {i, i + 1};
}

std::string IndexMap::describe() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::ConcatOffset: return "concat_offset(" + std::to_string(offset) + ")";
    case Kind::SplitOffset: return "split_offset(" + std::to_string(offset) + ")";
    case Kind::FlattenExpand: return "flatten_expand(" + std::to_string(h) + "," + std::to_string(w) + ")";
  }
  return "?";
}

void SlotTable::index() {
  lookup_.clear();
  for (std::size_t i = 0; i < slots.size(); ++i)
    lookup_[{slots[i].layer, static_cast<int>(slots[i].side), slots[i].port}] = i;
}

std::optional<std::size_t> SlotTable::find(const std::string& layer, Side side, int port) const {
  auto it = lookup_.find({layer, static_cast<int>(side), port});
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t SlotTable::at(const std::string& layer, Side side, int port) const {
  auto s = find(layer, side, port);
  if (!s)
    throw Error(ErrorKind::Internal,
                "no " + std::string(to_string(side)) + " slot " + layer + ":" + std::to_string(port));
  return *s;
}

std::pair<std::size_t, std::int64_t> DependencyGraph::locate(std::size_t atom) const {
  auto it = std::upper_bound(atom_offset.begin(), atom_offset.end(), static_cast<std::int64_t>(atom));
  const auto slot = static_cast<std::size_t>(it - atom_offset.begin()) - 1;
  return {slot, static_cast<std::int64_t>(atom) - atom_offset[slot]};
}

SlotTable build_slots(const ModelGraph& g) {
  ValidationReport report;
  const ShapeTable shapes = infer_shapes(g, &report);
  if (!report.ok()) throw Error(ErrorKind::Integrity, "cannot derive slots:\n" + report.summary());

  std::set<PortRef> input_fed;
  for (const auto& e : g.edges)
    if (g.find_input(e.src.node)) input_fed.insert(e.dst);
  std::set<PortRef> exits;
  for (const auto& o : g.outputs) exits.insert(o.src);

  SlotTable table;
  for (const auto& n : g.nodes) {
    const auto& ns = shapes.at(n.id);
    auto spec_in = [&](std::size_t p) -> const TensorSpec& {
      if (!ns.in.at(p)) throw Error(ErrorKind::Integrity, "unresolved input shape at " + n.id);
      return *ns.in[p];
    };
    auto push = [&](Side side, int port, std::int64_t width, Scheme scheme) {
      DimSlot s;
      s.layer = n.id;
      s.side = side;
      s.port = port;
      s.width = width;
      s.scheme = scheme;
      s.component = n.component;
      s.pinned = side == Side::Input ? input_fed.count(PortRef{n.id, port}) != 0
                                     : exits.count(PortRef{n.id, port}) != 0;
      table.slots.push_back(std::move(s));
    };
    const auto& a = n.attrs;
    switch (n.kind) {
      case LayerKind::Linear:
        push(Side::Input, 0, a.in_dim, Scheme::PruneCols);
        push(Side::Output, 0, a.out_dim, Scheme::PruneRows);
        break;
      case LayerKind::Conv2d:
        push(Side::Input, 0, a.in_ch, Scheme::PruneCols);
        push(Side::Output, 0, a.out_ch, Scheme::PruneRows);
        break;
      case LayerKind::BatchNorm:
        push(Side::Input, 0, a.channels, Scheme::Coupled);
        push(Side::Output, 0, a.channels, Scheme::Coupled);
        break;
      case LayerKind::Activation:
      case LayerKind::Identity:
        push(Side::Input, 0, spec_in(0).channels(), Scheme::Coupled);
        push(Side::Output, 0, spec_in(0).channels(), Scheme::Coupled);
        break;
      case LayerKind::Flatten:
        push(Side::Input, 0, spec_in(0).channels(), Scheme::Coupled);
        push(Side::Output, 0, spec_in(0).numel(), Scheme::None);
        break;
      case LayerKind::Add:
        for (std::size_t p = 0; p < n.num_inputs(); ++p)
          push(Side::Input, static_cast<int>(p), spec_in(p).channels(), Scheme::Coupled);
        push(Side::Output, 0, spec_in(0).channels(), Scheme::Coupled);
        break;
      case LayerKind::Concat:
        for (std::size_t p = 0; p < a.sizes.size(); ++p)
          push(Side::Input, static_cast<int>(p), a.sizes[p], Scheme::Coupled);
        push(Side::Output, 0, std::accumulate(a.sizes.begin(), a.sizes.end(), std::int64_t{0}), Scheme::Coupled);
        break;
      case LayerKind::Split:
        push(Side::Input, 0, std::accumulate(a.sizes.begin(), a.sizes.end(), std::int64_t{0}), Scheme::Coupled);
        for (std::size_t p = 0; p < a.sizes.size(); ++p)
          push(Side::Output, static_cast<int>(p), a.sizes[p], Scheme::Coupled);
        break;
    }
  }
  table.index();
  return table;
}

std::vector<DependencyEdge> build_dataflow(const ModelGraph& g, const SlotTable& slots) {
  std::vector<DependencyEdge> out;
  for (const auto& e : g.edges) {
    if (g.find_input(e.src.node)) continue;
    DependencyEdge d;
    d.from = slots.at(e.src.node, Side::Output, e.src.port);
    d.to = slots.at(e.dst.node, Side::Input, e.dst.port);
    d.base = d.origin = Origin::D1;
    d.recurrent = e.recurrent;
    if (slots.slots[d.from].width != slots.slots[d.to].width)
      throw Error(ErrorKind::Unmappable, "edge " + edge_id(e) + " couples widths " +
                                             std::to_string(slots.slots[d.from].width) + " and " +
                                             std::to_string(slots.slots[d.to].width));
    out.push_back(d);
  }
  return out;
}

std::vector<DependencyEdge> intra_layer_coupling(const LayerNode& n, const SlotTable& slots) {
  std::vector<DependencyEdge> out;
  auto couple = [&](std::size_t from, std::size_t to, IndexMap map) {
    DependencyEdge d;
    d.from = from;
    d.to = to;
    d.base = d.origin = Origin::D2;
    d.map = map;
    out.push_back(d);
  };
  const auto in0 = [&] { return slots.at(n.id, Side::Input, 0); };
  const auto out0 = [&] { return slots.at(n.id, Side::Output, 0); };
  switch (n.kind) {
    case LayerKind::Linear:
    case LayerKind::Conv2d:
      break;
    case LayerKind::BatchNorm:
    case LayerKind::Activation:
    case LayerKind::Identity:
      couple(in0(), out0(), {});
      break;
    case LayerKind::Flatten: {
      const auto& in = slots.slots[in0()];
      const auto& o = slots.slots[out0()];
      const auto plane = o.width / in.width;
      // h and w are only used as their product; keep h = plane, w = 1 when
      // the spatial split is unknown to the slot table.
      couple(in0(), out0(), {IndexMap::Kind::FlattenExpand, 0, plane, 1});
      break;
    }
    case LayerKind::Add:
      for (std::size_t p = 0; p < n.num_inputs(); ++p)
        couple(slots.at(n.id, Side::Input, static_cast<int>(p)), out0(), {});
      break;
    case LayerKind::Concat: {
      std::int64_t offset = 0;
      for (std::size_t p = 0; p < n.attrs.sizes.size(); ++p) {
        couple(slots.at(n.id, Side::Input, static_cast<int>(p)), out0(),
               {IndexMap::Kind::ConcatOffset, offset, 1, 1});
        offset += n.attrs.sizes[p];
      }
      break;
    }
    case LayerKind::Split: {
      std::int64_t offset = 0;
      for (std::size_t p = 0; p < n.attrs.sizes.size(); ++p) {
        couple(slots.at(n.id, Side::Output, static_cast<int>(p)), in0(),
               {IndexMap::Kind::SplitOffset, offset, 1, 1});
        offset += n.attrs.sizes[p];
      }
      break;
    }
  }
  return out;
}

DependencyGraph build_dependency(const ModelGraph& g, const InterfaceMap* interfaces, Mode mode) {
  if (mode == Mode::ComponentAware && !interfaces)
    throw Error(ErrorKind::MissingInterfaces, "component-aware mode needs traced component interfaces");
  const SlotTable table = build_slots(g);
  DependencyGraph d;
  d.mode = mode;
  d.slots = table.slots;
  d.atom_offset.assign(1, 0);
  for (const auto& s : d.slots) d.atom_offset.push_back(d.atom_offset.back() + s.width);

  std::vector<DependencyEdge> all = build_dataflow(g, table);
  for (const auto& n : g.nodes) {
    auto more = intra_layer_coupling(n, table);
    all.insert(all.end(), more.begin(), more.end());
  }
  if (mode == Mode::Vanilla) {
    d.edges = std::move(all);
    return d;
  }
  for (auto e : all) {
    const auto& from = d.slots[e.from];
    const auto& to = d.slots[e.to];
    if (from.component == to.component) {
      e.origin = Origin::DI;
      d.edges.push_back(e);
      continue;
    }
    const PortRef src{from.layer, from.port};
    const PortRef dst{to.layer, to.port};
    const auto fi = interfaces->find(from.component);
    const auto ti = interfaces->find(to.component);
    const bool verified = fi != interfaces->end() && ti != interfaces->end() && fi->second.outputs.count(src) &&
                          ti->second.inputs.count(dst);
    if (!verified) {
      d.warnings.push_back("dropped cross-component edge " + to_string(src) + "->" + to_string(dst) +
                           " not on a traced interface");
      continue;
    }
    e.origin = Origin::DX;
    d.edges.push_back(e);
  }
  return d;
}

namespace {

template <typename Fn>
void for_each_link(const DependencyGraph& d, const DependencyEdge& e, Fn&& fn) {
  const auto& from = d.slots[e.from];
  for (std::int64_t i = 0; i < from.width; ++i) {
    const auto [b, end] = e.map.image(i);
    for (std::int64_t j = b; j < end; ++j) fn(d.atom(e.from, i), d.atom(e.to, j));
  }
}

}  // namespace

ClosureInput closure_input(const DependencyGraph& d) {
  ClosureInput in;
  in.atom_count = d.atom_count();
  in.domain.assign(in.atom_count, -1);

  std::vector<std::pair<std::size_t, std::size_t>> links;
  std::vector<bool> recurrent;
  std::vector<bool> coupling;  // link comes from intra-layer coupling
  for (const auto& e : d.edges) {
    for_each_link(d, e, [&](std::size_t a, std::size_t b) {
      links.emplace_back(a, b);
      recurrent.push_back(e.recurrent);
      coupling.push_back(e.base == Origin::D2);
    });
  }

  if (d.mode == Mode::ComponentAware) {
    // Founders: producer slots with DX edges, in (layer, port) order.
    std::map<PortRef, std::pair<std::size_t, std::vector<std::size_t>>> founders;
    for (const auto& e : d.edges) {
      if (e.origin != Origin::DX) continue;
      const auto& s = d.slots[e.from];
      auto& f = founders[PortRef{s.layer, s.port}];
      f.first = e.from;
      f.second.push_back(e.to);
    }
    std::vector<std::vector<std::size_t>> adjacency(in.atom_count);
    for (std::size_t l = 0; l < links.size(); ++l) {
      if (!coupling[l]) continue;
      adjacency[links[l].first].push_back(links[l].second);
      adjacency[links[l].second].push_back(links[l].first);
    }
    int k = 0;
    for (const auto& [port, f] : founders) {
      in.founders.push_back(port);
      std::deque<std::size_t> frontier;
      auto claim_slot = [&](std::size_t slot) {
        for (std::int64_t i = 0; i < d.slots[slot].width; ++i) {
          const auto atom = d.atom(slot, i);
          if (in.domain[atom] == -1) {
            in.domain[atom] = k;
            frontier.push_back(atom);
          }
        }
      };
      claim_slot(f.first);
      for (auto to : f.second) claim_slot(to);
      ++k;
    }
    // Intra-layer neighbours join the first founder that reaches them.
    for (int f = 0; f < k; ++f) {
      std::deque<std::size_t> frontier;
      for (std::size_t a = 0; a < in.atom_count; ++a)
        if (in.domain[a] == f) frontier.push_back(a);
      while (!frontier.empty()) {
        const auto a = frontier.front();
        frontier.pop_front();
        for (auto b : adjacency[a]) {
          if (in.domain[b] == -1) {
            in.domain[b] = f;
            frontier.push_back(b);
          }
        }
      }
    }
  }

  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto [a, b] = links[l];
    if (in.domain[a] != in.domain[b]) continue;
    in.links.emplace_back(a, b);
    in.recurrent.push_back(recurrent[l]);
  }
  return in;
}

std::vector<PruningGroup> assemble_groups(const DependencyGraph& d, const ClosureInput& in,
                                          std::vector<std::vector<std::size_t>> classes) {
  // Cross classes group by founder. The rest group by shared slots: two
  // classes touching a common slot cannot be pruned independently of its width.
  for (auto& atoms : classes) std::sort(atoms.begin(), atoms.end());
  DisjointSet joined(classes.size());
  std::map<std::size_t, std::size_t> slot_owner;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (in.domain[classes[c].front()] >= 0) continue;
    for (auto a : classes[c]) {
      const auto [it, fresh] = slot_owner.emplace(d.locate(a).first, c);
      if (!fresh) joined.unite(it->second, c);
    }
  }
  using Key = std::pair<int, std::size_t>;
  std::map<Key, std::vector<std::size_t>> buckets;  // -> class indices
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const int domain = in.domain[classes[c].front()];
    buckets[domain >= 0 ? Key{domain, 0} : Key{-1, joined.find(c)}].push_back(c);
  }

  std::vector<std::size_t> atom_group(in.atom_count, 0);
  std::vector<PruningGroup> groups;
  for (auto& [key, members] : buckets) {
    PruningGroup grp;
    std::set<std::size_t> slots;
    std::set<std::string> layers, comps;
    for (auto c : members) {
      for (auto a : classes[c]) {
        const auto slot = d.locate(a).first;
        slots.insert(slot);
        layers.insert(d.slots[slot].layer);
        comps.insert(d.slots[slot].component);
      }
      grp.classes.push_back(classes[c]);
    }
    std::sort(grp.classes.begin(), grp.classes.end());
    grp.slots.assign(slots.begin(), slots.end());
    grp.layers.assign(layers.begin(), layers.end());
    grp.components.assign(comps.begin(), comps.end());
    if (key.first >= 0) {
      grp.kind = GroupKind::Cross;
      const auto& founder = in.founders.at(static_cast<std::size_t>(key.first));
      for (auto s : grp.slots) {
        if (d.slots[s].layer == founder.node && d.slots[s].side == Side::Output && d.slots[s].port == founder.port)
          grp.source = d.slots[s].component;
      }
      for (const auto& c : grp.components)
        if (c != grp.source) grp.targets.push_back(c);
    } else if (grp.components.size() == 1) {
      grp.kind = GroupKind::Intra;
      grp.component = grp.components.front();
    } else {
      grp.kind = GroupKind::Spanning;
    }
    groups.push_back(std::move(grp));
  }

  std::sort(groups.begin(), groups.end(), [](const PruningGroup& a, const PruningGroup& b) {
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    if (a.layers.front() != b.layers.front()) return a.layers.front() < b.layers.front();
    return a.classes.front().front() < b.classes.front().front();
  });
  for (std::size_t i = 0; i < groups.size(); ++i) {
    groups[i].id = i;
    for (const auto& cls : groups[i].classes)
      for (auto a : cls) atom_group[a] = i;
  }
  for (std::size_t l = 0; l < in.links.size(); ++l) {
    if (in.recurrent[l]) groups[atom_group[in.links[l].first]].cyclic = true;
  }
  return groups;
}

std::vector<PruningGroup> extract_groups(const DependencyGraph& d) {
  const ClosureInput in = closure_input(d);
  DisjointSet uf(in.atom_count);
  for (const auto& [a, b] : in.links) uf.unite(a, b);
  return assemble_groups(d, in, uf.sets());
}

std::vector<PruningGroup> closure_oracle(const DependencyGraph& d, bool parallel) {
  const ClosureInput in = closure_input(d);
  if (in.atom_count > kOracleAtomCap)
    throw Error(ErrorKind::SizeCap, std::to_string(in.atom_count) + " atoms exceed the oracle cap of " +
                                        std::to_string(kOracleAtomCap));
  kernels::BitMatrix reach(in.atom_count);
  for (std::size_t i = 0; i < in.atom_count; ++i) reach.set(i, i);
  for (const auto& [a, b] : in.links) {
    reach.set(a, b);
    reach.set(b, a);
  }
  if (parallel)
    kernels::closure_omp(reach);
  else
    kernels::closure_serial(reach);
  std::vector<bool> taken(in.atom_count, false);
  std::vector<std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < in.atom_count; ++i) {
    if (taken[i]) continue;
    std::vector<std::size_t> cls;
    for (std::size_t j = 0; j < in.atom_count; ++j) {
      if (reach.test(i, j)) {
        cls.push_back(j);
        taken[j] = true;
      }
    }
    classes.push_back(std::move(cls));
  }
  return assemble_groups(d, in, std::move(classes));
}

PhysicalClasses physical_classes(const DependencyGraph& d) {
  DisjointSet uf(d.atom_count());
  for (const auto& e : d.edges) for_each_link(d, e, [&](std::size_t a, std::size_t b) { uf.unite(a, b); });
  PhysicalClasses pc;
  pc.classes = uf.sets();
  pc.class_of.assign(d.atom_count(), 0);
  for (std::size_t c = 0; c < pc.classes.size(); ++c)
    for (auto a : pc.classes[c]) pc.class_of[a] = c;
  return pc;
}

GroupStats group_stats(const std::vector<PruningGroup>& groups) {
  GroupStats s;
  s.groups = groups.size();
  std::size_t total = 0;
  for (const auto& g : groups) {
    total += g.size();
    if (g.kind == GroupKind::Cross) ++s.cross;
    s.index_classes += g.width();
  }
  s.mean_size = groups.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(groups.size());
  return s;
}

nlohmann::json groups_to_json(const DependencyGraph& d, const std::vector<PruningGroup>& groups) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json j{{"id", g.id},         {"kind", to_string(g.kind)}, {"layers", g.layers},
                     {"width", g.width()}, {"size", g.size()},          {"components", g.components},
                     {"cyclic", g.cyclic}};
    if (g.kind == GroupKind::Intra) j["component"] = g.component;
    if (g.kind == GroupKind::Cross) {
      j["source"] = g.source;
      j["targets"] = g.targets;
    }
    nlohmann::json slots = nlohmann::json::array();
    for (auto s : g.slots) {
      const auto& sl = d.slots[s];
      slots.push_back(sl.layer + "." + to_string(sl.side) + std::to_string(sl.port));
    }
    j["slots"] = slots;
    arr.push_back(std::move(j));
  }
  return arr;
}

bool same_partition(const std::vector<PruningGroup>& a, const std::vector<PruningGroup>& b) {
  auto canon = [](const std::vector<PruningGroup>& gs) {
    std::vector<std::vector<std::vector<std::size_t>>> out;
    for (const auto& g : gs) {
      auto classes = g.classes;
      for (auto& c : classes) std::sort(c.begin(), c.end());
      std::sort(classes.begin(), classes.end());
      out.push_back(std::move(classes));
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return canon(a) == canon(b);
}

}  // namespace prunegraph
