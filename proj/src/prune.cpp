#include <algorithm>
#include <cstdio>
#include <exception>
#include <sstream>

#include <omp.h>

#include "prunegraph/error.hpp"
#include "prunegraph/kernels.hpp"
#include "prunegraph/prune.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

std::vector<std::vector<std::int64_t>> removed_indices(const Analysis& a, const PruningPlan& plan) {
  std::vector<std::vector<std::int64_t>> out(a.dep.slots.size());
  for (auto p : plan.removed) {
    for (auto atom : a.physical.classes.at(p)) {
      const auto [slot, idx] = a.dep.locate(atom);
      out[slot].push_back(idx);
    }
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

namespace {

std::vector<std::size_t> keep_list(std::int64_t width, const std::vector<std::int64_t>& removed) {
  std::vector<std::size_t> keep;
  std::size_t r = 0;
  for (std::int64_t i = 0; i < width; ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
      continue;
    }
    keep.push_back(static_cast<std::size_t>(i));
  }
  return keep;
}

std::map<std::string, LayerWidth> widths(const ModelGraph& g) {
  std::map<std::string, LayerWidth> out;
  for (const auto& n : g.nodes) {
    const auto& a = n.attrs;
    if (n.kind == LayerKind::Linear) out[n.id] = {a.in_dim, a.out_dim};
    if (n.kind == LayerKind::Conv2d) out[n.id] = {a.in_ch, a.out_ch};
    if (n.kind == LayerKind::BatchNorm) out[n.id] = {a.channels, a.channels};
  }
  return out;
}

std::vector<float> gather(std::span<const float> src, const std::vector<std::size_t>& keep) {
  std::vector<float> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(src[i]);
  return out;
}

}  // namespace

PruneResult apply_plan(const ModelGraph& g, const WeightStore& w, const Analysis& a, const PruningPlan& plan) {
  const auto removed = removed_indices(a, plan);
  std::map<std::tuple<std::string, int, int>, std::size_t> slot_of;
  for (std::size_t s = 0; s < a.dep.slots.size(); ++s) {
    const auto& sl = a.dep.slots[s];
    slot_of[{sl.layer, static_cast<int>(sl.side), sl.port}] = s;
  }
  auto keep = [&](const std::string& layer, Side side, int port) {
    const auto s = slot_of.at({layer, static_cast<int>(side), port});
    return keep_list(a.dep.slots[s].width, removed[s]);
  };

  PruneResult r;
  r.graph = g;
  WeightStoreBuilder builder;
  for (auto& n : r.graph.nodes) {
    auto& at = n.attrs;
    switch (n.kind) {
      case LayerKind::Linear:
      case LayerKind::Conv2d: {
        const bool conv = n.kind == LayerKind::Conv2d;
        const auto rows = keep(n.id, Side::Output, 0);
        const auto cols = keep(n.id, Side::Input, 0);
        const std::size_t in = static_cast<std::size_t>(conv ? at.in_ch : at.in_dim);
        const std::size_t taps = conv ? static_cast<std::size_t>(at.kernel * at.kernel) : 1;
        auto weight = w.tensor(n.id, "weight");
        std::vector<float> wk;
        wk.reserve(rows.size() * cols.size() * taps);
        for (auto o : rows)
          for (auto i : cols)
            for (std::size_t t = 0; t < taps; ++t) wk.push_back(weight[(o * in + i) * taps + t]);
        auto bias = gather(w.tensor(n.id, "bias"), rows);
        const auto ro = static_cast<std::int64_t>(rows.size());
        const auto ci = static_cast<std::int64_t>(cols.size());
        if (conv) {
          at.out_ch = ro;
          at.in_ch = ci;
          builder.add(n.id, "weight", {ro, ci, at.kernel, at.kernel}, std::move(wk));
        } else {
          at.out_dim = ro;
          at.in_dim = ci;
          builder.add(n.id, "weight", {ro, ci}, std::move(wk));
        }
        builder.add(n.id, "bias", {ro}, std::move(bias));
        break;
      }
      case LayerKind::BatchNorm: {
        const auto ch = keep(n.id, Side::Output, 0);
        at.channels = static_cast<std::int64_t>(ch.size());
        for (const char* name : {"gamma", "beta", "running_mean", "running_var"})
          builder.add(n.id, name, {at.channels}, gather(w.tensor(n.id, name), ch));
        break;
      }
      case LayerKind::Concat:
        for (std::size_t p = 0; p < at.sizes.size(); ++p)
          at.sizes[p] = static_cast<std::int64_t>(keep(n.id, Side::Input, static_cast<int>(p)).size());
        break;
      case LayerKind::Split:
        for (std::size_t p = 0; p < at.sizes.size(); ++p)
          at.sizes[p] = static_cast<std::int64_t>(keep(n.id, Side::Output, static_cast<int>(p)).size());
        break;
      default:
        break;
    }
  }
  r.graph.reindex();
  r.weights = std::move(builder).build();

  const auto report = validate_graph(r.graph, &r.weights);
  if (!report.ok()) throw Error(ErrorKind::Internal, "pruned model is inconsistent:\n" + report.summary());

  auto& s = r.report;
  s.target = plan.target;
  s.achieved = plan.achieved;
  s.classes_removed = plan.removed.size();
  s.removable = plan.removable;
  s.params_before = w.parameter_count();
  s.params_after = r.weights.parameter_count();
  s.bytes_before = w.byte_size();
  s.bytes_after = r.weights.byte_size();
  s.widths_before = widths(g);
  s.widths_after = widths(r.graph);
  s.warnings = plan.warnings;
  return r;
}

nlohmann::json to_json(const SparsityReport& r) {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [id, before] : r.widths_before) {
    const auto& after = r.widths_after.at(id);
    layers[id] = {{"before", {before.in, before.out}}, {"after", {after.in, after.out}}};
  }
  return {{"target", r.target},
          {"achieved", r.achieved},
          {"classes_removed", r.classes_removed},
          {"removable", r.removable},
          {"params_before", r.params_before},
          {"params_after", r.params_after},
          {"bytes_before", r.bytes_before},
          {"bytes_after", r.bytes_after},
          {"layers", layers},
          {"warnings", r.warnings}};
}

std::vector<CurvePoint> sweep(const ModelGraph& g, const WeightStore& w, const TaskEval& eval,
                              const SweepOptions& opts) {
  InterfaceMap interfaces = opts.interfaces ? *opts.interfaces : InterfaceMap{};
  const bool aware = std::find(opts.modes.begin(), opts.modes.end(), Mode::ComponentAware) != opts.modes.end();
  if (aware && !opts.interfaces) interfaces = trace_interfaces(g, w);

  struct Prepared {
    Analysis analysis;
    std::vector<ImportanceScore> scores;
  };
  std::vector<Prepared> prepared;
  for (auto mode : opts.modes) {
    Prepared p;
    p.analysis = analyze(g, &interfaces, mode);
    p.scores = score_groups(g, w, p.analysis, opts.norm, opts.weight_overrides);
    prepared.push_back(std::move(p));
  }

  const std::size_t levels = opts.levels.size();
  std::vector<CurvePoint> points(opts.modes.size() * levels);
  std::vector<std::exception_ptr> failures(points.size());
  const int jobs = static_cast<int>(points.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count()) if (opts.parallel)
  for (int j = 0; j < jobs; ++j) {
    try {
      const auto m = static_cast<std::size_t>(j) / levels;
      const auto l = static_cast<std::size_t>(j) % levels;
      const auto& prep = prepared[m];
      const auto plan = allocate(g, prep.analysis, prep.scores, opts.levels[l], opts.protections);
      const auto pruned = apply_plan(g, w, prep.analysis, plan);
      auto& pt = points[static_cast<std::size_t>(j)];
      pt.level = opts.levels[l];
      pt.mode = opts.modes[m];
      pt.metric = eval(pruned.graph, pruned.weights);
      pt.params = pruned.report.params_after;
      pt.bytes = pruned.report.bytes_after;
      pt.achieved = plan.achieved;
    } catch (...) {
      failures[static_cast<std::size_t>(j)] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  return points;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream os;
  os << "level,mode,metric,params,bytes\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.4f", p.level);
    os << buf << ',' << to_string(p.mode) << ',';
    std::snprintf(buf, sizeof buf, "%.9g", p.metric);
    os << buf << ',' << p.params << ',' << p.bytes << '\n';
  }
  return os.str();
}

nlohmann::json curve_json(const std::vector<CurvePoint>& points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points) {
    arr.push_back({{"level", p.level},
                   {"mode", to_string(p.mode)},
                   {"metric", p.metric},
                   {"params", p.params},
                   {"bytes", p.bytes},
                   {"achieved", p.achieved}});
  }
  return arr;
}

}  // namespace prunegraph
