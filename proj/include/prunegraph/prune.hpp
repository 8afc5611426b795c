#pragma once

// Norm-based scoring of pruning groups, global greedy allocation of a
// sparsity target, and the structural rewrite of graph and weights.
//
// Groups are the unit of reporting, scoring and protection. What gets
// physically removed is a closure class over every dependency edge: the
// smallest index set whose removal keeps all shapes consistent. In vanilla
// mode the two coincide; in component-aware mode a physical class may hold
// several group-local classes (an interface index seen from both sides), and
// it is ranked by the highest of their scores.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prunegraph/dependency.hpp"
#include "prunegraph/ir.hpp"
#include "prunegraph/trace.hpp"
#include "prunegraph/weights.hpp"
#include "json.hpp"

namespace prunegraph {

enum class Norm { L1, L2 };
const char* to_string(Norm norm);
std::optional<Norm> parse_norm(const std::string& name);

/// Dependency graph, groups and physical classes of one model in one mode.
struct Analysis {
  DependencyGraph dep;
  std::vector<PruningGroup> groups;
  PhysicalClasses physical;
};

/// `interfaces` is required for component-aware mode.
Analysis analyze(const ModelGraph& g, const InterfaceMap* interfaces, Mode mode);

struct ImportanceScore {
  std::size_t group = 0;
  Norm norm = Norm::L1;
  double component_weight = 1.0;
  /// One score per PruningGroup::classes entry, weight already applied.
  std::vector<double> class_scores;
};

/// Component weights default to Component::importance_weight; entries in
/// `weight_overrides` replace them. Throws Error(MissingWeights) when a group
/// touches a parameterized layer absent from `w`.
std::vector<ImportanceScore> score_groups(const ModelGraph& g, const WeightStore& w, const Analysis& a, Norm norm,
                                          const std::map<std::string, double>& weight_overrides = {});

struct PruningPlan {
  double target = 0.0;
  double achieved = 0.0;
  std::size_t floor = 1;
  std::set<std::string> protections;
  /// Physical classes not pinned by a graph input or output.
  std::size_t removable = 0;
  /// Removed physical classes, in removal order.
  std::vector<std::size_t> removed;
  /// group id -> removed group-local class indices, lowest score first.
  std::map<std::size_t, std::vector<std::size_t>> removals;
  bool unreachable = false;
  std::vector<std::string> warnings;
};

/// Protected components are `protections` plus every component with
/// prunable=false. Throws Error(InvalidArgument) unless 0 <= target < 1.
PruningPlan allocate(const ModelGraph& g, const Analysis& a, const std::vector<ImportanceScore>& scores,
                     double target, const std::set<std::string>& protections = {}, std::size_t floor = 1);

struct LayerWidth {
  std::int64_t in = 0;
  std::int64_t out = 0;
  bool operator==(const LayerWidth&) const = default;
};

struct SparsityReport {
  double target = 0.0;
  double achieved = 0.0;
  std::size_t classes_removed = 0;
  std::size_t removable = 0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::size_t bytes_before = 0;
  std::size_t bytes_after = 0;
  std::map<std::string, LayerWidth> widths_before;  // parameterized layers
  std::map<std::string, LayerWidth> widths_after;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const SparsityReport& r);

struct PruneResult {
  ModelGraph graph;
  WeightStore weights;
  SparsityReport report;
};

/// Deletes the plan's rows, columns, filters and channels (batchnorm running
/// statistics included) and updates attrs. Throws Error(Internal) if the
/// rewritten model fails validation.
PruneResult apply_plan(const ModelGraph& g, const WeightStore& w, const Analysis& a, const PruningPlan& plan);

/// Per-slot indices that `plan` removes, sorted.
std::vector<std::vector<std::int64_t>> removed_indices(const Analysis& a, const PruningPlan& plan);

using TaskEval = std::function<double(const ModelGraph&, const WeightStore&)>;

struct CurvePoint {
  double level = 0.0;
  Mode mode = Mode::Vanilla;
  double metric = 0.0;
  std::size_t params = 0;
  std::size_t bytes = 0;
  double achieved = 0.0;
};

struct SweepOptions {
  std::vector<double> levels;
  std::vector<Mode> modes{Mode::Vanilla, Mode::ComponentAware};
  Norm norm = Norm::L1;
  std::set<std::string> protections;
  std::map<std::string, double> weight_overrides;
  /// Traced interfaces; computed from (g, w) when absent.
  std::optional<InterfaceMap> interfaces;
  bool parallel = true;
};

/// Every level re-prunes the original model. `eval` must be safe to call
/// concurrently. Points are ordered by mode, then level as given.
std::vector<CurvePoint> sweep(const ModelGraph& g, const WeightStore& w, const TaskEval& eval,
                              const SweepOptions& opts);

/// level,mode,metric,params,bytes
std::string curve_csv(const std::vector<CurvePoint>& points);
nlohmann::json curve_json(const std::vector<CurvePoint>& points);

}  // namespace prunegraph
