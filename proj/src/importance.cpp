#include <algorithm>
#include <cmath>
#include <deque>
#include <tuple>

#include "prunegraph/error.hpp"
#include "prunegraph/prune.hpp"

namespace prunegraph {

const char* to_string(Norm norm) { return norm == Norm::L1 ? "l1" : "l2"; }

std::optional<Norm> parse_norm(const std::string& name) {
  if (name == "l1") return Norm::L1;
  if (name == "l2") return Norm::L2;
  return std::nullopt;
}

Analysis analyze(const ModelGraph& g, const InterfaceMap* interfaces, Mode mode) {
  Analysis a;
  a.dep = build_dependency(g, interfaces, mode);
  a.groups = extract_groups(a.dep);
  a.physical = physical_classes(a.dep);
  return a;
}

namespace {

bool carries_params(const LayerNode& n, Side side) {
  switch (n.kind) {
    case LayerKind::Linear:
    case LayerKind::Conv2d: return true;
    case LayerKind::BatchNorm: return side == Side::Output;
    default: return false;
  }
}

// Sum of |w|^p over the tensordims each index of a slot owns.
std::vector<double> slot_power(const LayerNode& n, const WeightStore& w, const DimSlot& s, Norm norm) {
  std::vector<double> out(static_cast<std::size_t>(s.width), 0.0);
  if (!carries_params(n, s.side)) return out;
  auto pw = [norm](float v) {
    const double a = std::fabs(static_cast<double>(v));
    return norm == Norm::L1 ? a : a * a;
  };
  auto fetch = [&](const char* name) {
    if (!w.has(n.id, name))
      throw Error(ErrorKind::MissingWeights, "layer '" + n.id + "' has no tensor '" + name + "'");
    return w.tensor(n.id, name);
  };
  if (n.kind == LayerKind::BatchNorm) {
    auto gamma = fetch("gamma");
    auto beta = fetch("beta");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pw(gamma[i]) + pw(beta[i]);
    return out;
  }
  const auto& a = n.attrs;
  const bool conv = n.kind == LayerKind::Conv2d;
  const std::size_t rows = static_cast<std::size_t>(conv ? a.out_ch : a.out_dim);
  const std::size_t cols = static_cast<std::size_t>(conv ? a.in_ch : a.in_dim);
  const std::size_t taps = conv ? static_cast<std::size_t>(a.kernel * a.kernel) : 1;
  auto weight = fetch("weight");
  if (s.side == Side::Output) {
    auto bias = fetch("bias");
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = pw(bias[r]);
      for (std::size_t k = 0; k < cols * taps; ++k) acc += pw(weight[r * cols * taps + k]);
      out[r] = acc;
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t t = 0; t < taps; ++t) out[c] += pw(weight[(r * cols + c) * taps + t]);
  }
  return out;
}

}  // namespace

std::vector<ImportanceScore> score_groups(const ModelGraph& g, const WeightStore& w, const Analysis& a, Norm norm,
                                          const std::map<std::string, double>& weight_overrides) {
  const auto& d = a.dep;
  std::vector<double> power(d.atom_count(), 0.0);
  std::vector<bool> has_params(d.atom_count(), false);
  for (std::size_t s = 0; s < d.slots.size(); ++s) {
    const auto& slot = d.slots[s];
    const auto* node = g.find_node(slot.layer);
    if (!node) throw Error(ErrorKind::InvalidArgument, "analysis references unknown layer '" + slot.layer + "'");
    const auto p = slot_power(*node, w, slot, norm);
    const bool params = carries_params(*node, slot.side);
    for (std::int64_t i = 0; i < slot.width; ++i) {
      power[d.atom(s, i)] = p[static_cast<std::size_t>(i)];
      has_params[d.atom(s, i)] = params;
    }
  }
  auto finish = [norm](double sum) { return norm == Norm::L1 ? sum : std::sqrt(sum); };

  std::vector<std::vector<std::size_t>> adjacency;  // built on first parameter-free class
  auto nearest = [&](const std::vector<std::size_t>& start) {
    if (adjacency.empty()) {
      adjacency.resize(d.atom_count());
      for (const auto& e : d.edges) {
        for (std::int64_t i = 0; i < d.slots[e.from].width; ++i) {
          const auto [lo, hi] = e.map.image(i);
          for (auto j = lo; j < hi; ++j) {
            adjacency[d.atom(e.from, i)].push_back(d.atom(e.to, j));
            adjacency[d.atom(e.to, j)].push_back(d.atom(e.from, i));
          }
        }
      }
    }
    std::vector<bool> seen(d.atom_count(), false);
    std::vector<std::size_t> frontier = start;
    for (auto x : frontier) seen[x] = true;
    while (!frontier.empty()) {
      double sum = 0.0;
      bool found = false;
      std::vector<std::size_t> next;
      for (auto x : frontier) {
        if (has_params[x]) {
          sum += power[x];
          found = true;
        }
        for (auto y : adjacency[x])
          if (!seen[y]) {
            seen[y] = true;
            next.push_back(y);
          }
      }
      if (found) return sum;
      frontier = std::move(next);
    }
    return 0.0;
  };

  auto weight_of = [&](const std::string& comp) {
    auto it = weight_overrides.find(comp);
    if (it != weight_overrides.end()) return it->second;
    const auto* c = g.find_component(comp);
    return c ? c->importance_weight : 1.0;
  };

  std::vector<ImportanceScore> scores;
  for (const auto& grp : a.groups) {
    ImportanceScore s;
    s.group = grp.id;
    s.norm = norm;
    s.component_weight = 0.0;
    for (const auto& c : grp.components) s.component_weight = std::max(s.component_weight, weight_of(c));
    for (const auto& cls : grp.classes) {
      double sum = 0.0;
      bool params = false;
      for (auto atom : cls) {
        sum += power[atom];
        params = params || has_params[atom];
      }
      if (!params) sum = nearest(cls);
      s.class_scores.push_back(finish(sum) * s.component_weight);
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

PruningPlan allocate(const ModelGraph& g, const Analysis& a, const std::vector<ImportanceScore>& scores,
                     double target, const std::set<std::string>& protections, std::size_t floor) {
  if (!(target >= 0.0 && target < 1.0))
    throw Error(ErrorKind::InvalidArgument, "target sparsity must lie in [0, 1), got " + std::to_string(target));
  if (scores.size() != a.groups.size())
    throw Error(ErrorKind::InvalidArgument, "scores do not match the analysis groups");
  std::set<std::string> frozen_components;
  for (const auto& c : protections) {
    if (!g.find_component(c)) throw Error(ErrorKind::InvalidArgument, "unknown component '" + c + "' to protect");
    frozen_components.insert(c);
  }
  for (const auto& c : g.components)
    if (!c.prunable) frozen_components.insert(c.id);

  PruningPlan plan;
  plan.target = target;
  plan.floor = floor;
  plan.protections = frozen_components;

  const auto& d = a.dep;
  const auto& phys = a.physical;
  const std::size_t n = phys.classes.size();
  std::vector<double> priority(n, 0.0);
  std::vector<bool> frozen(n, false), pinned(n, false);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> members(n);  // (group, class index)
  for (const auto& grp : a.groups) {
    bool grp_frozen = false;
    for (const auto& c : grp.components) grp_frozen = grp_frozen || frozen_components.count(c) != 0;
    for (std::size_t ci = 0; ci < grp.classes.size(); ++ci) {
      const auto p = phys.class_of[grp.classes[ci].front()];
      priority[p] = std::max(priority[p], scores[grp.id].class_scores[ci]);
      frozen[p] = frozen[p] || grp_frozen;
      members[p].emplace_back(grp.id, ci);
    }
  }
  using TieKey = std::pair<std::string, std::int64_t>;
  std::vector<TieKey> tie(n);
  for (std::size_t p = 0; p < n; ++p) {
    bool first = true;
    for (auto atom : phys.classes[p]) {
      const auto [slot, idx] = d.locate(atom);
      pinned[p] = pinned[p] || d.slots[slot].pinned;
      TieKey k{d.slots[slot].layer, idx};
      if (first || k < tie[p]) tie[p] = k;
      first = false;
    }
    if (!pinned[p]) ++plan.removable;
  }

  const auto wanted = static_cast<std::size_t>(std::floor(target * static_cast<double>(plan.removable) + 1e-9));
  std::vector<std::size_t> order;
  for (std::size_t p = 0; p < n; ++p)
    if (!pinned[p] && !frozen[p]) order.push_back(p);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::tie(priority[x], tie[x]) < std::tie(priority[y], tie[y]);
  });

  std::vector<std::int64_t> kept(d.slots.size());
  for (std::size_t s = 0; s < d.slots.size(); ++s) kept[s] = d.slots[s].width;
  std::map<std::size_t, std::int64_t> take;
  for (auto p : order) {
    if (plan.removed.size() >= wanted) break;
    take.clear();
    for (auto atom : phys.classes[p]) ++take[d.locate(atom).first];
    const bool fits = std::all_of(take.begin(), take.end(), [&](const auto& st) {
      return kept[st.first] - st.second >= static_cast<std::int64_t>(floor);
    });
    if (!fits) continue;
    for (const auto& [s, k] : take) kept[s] -= k;
    plan.removed.push_back(p);
  }

  for (auto p : plan.removed)
    for (const auto& [gid, ci] : members[p]) plan.removals[gid].push_back(ci);
  for (auto& [gid, list] : plan.removals) {
    const auto& sc = scores[gid].class_scores;
    std::stable_sort(list.begin(), list.end(), [&](std::size_t x, std::size_t y) { return sc[x] < sc[y]; });
  }

  plan.achieved = plan.removable ? static_cast<double>(plan.removed.size()) / static_cast<double>(plan.removable) : 0.0;
  if (plan.removed.size() < wanted) {
    plan.unreachable = true;
    plan.warnings.push_back("target sparsity " + std::to_string(target) + " unreachable: removed " +
                            std::to_string(plan.removed.size()) + " of " + std::to_string(wanted) +
                            " classes under floors and protections");
  }
  return plan;
}

}  // namespace prunegraph
