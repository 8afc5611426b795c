#pragma once

// Refines the all-pairs candidate component graph down to the component
// edges that actually carried data in traced forward passes, and derives
// each component's input/output interfaces from those traces.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "prunegraph/executor.hpp"
#include "prunegraph/ir.hpp"
#include "json.hpp"

namespace prunegraph {

struct ComponentDependencyMatrix {
  std::vector<std::string> components;  // sorted ids; row/col order
  std::vector<std::vector<bool>> used;  // used[p][q]: data flowed p -> q
  std::vector<std::string> warnings;

  std::size_t index(const std::string& id) const;
  bool at(const std::string& from, const std::string& to) const;
  std::size_t cross_count() const;
};

struct ComponentInterfaces {
  std::set<PortRef> inputs;   // C^-: consumer ports receiving cross-component data
  std::set<PortRef> outputs;  // C^+: producer ports sending cross-component data
};

using InterfaceMap = std::map<std::string, ComponentInterfaces>;

/// Runs one forward pass per branch setting (both settings when the graph has
/// conditional edges) on seeded inputs.
std::vector<TraceRecord> trace_all_branches(const ModelGraph& g, const WeightStore& w, int unroll = 2,
                                            std::uint64_t seed = 0);

ComponentDependencyMatrix refine_candidates(const ModelGraph& g, const std::vector<TraceRecord>& traces);

/// Throws Error(DeclarationConflict) when a component's non-empty declared
/// interface list differs from the traced one.
InterfaceMap infer_interfaces(const ModelGraph& g, const ComponentDependencyMatrix& m,
                              const std::vector<TraceRecord>& traces);

/// Parameterized layers that do not lie on an entry-to-exit path of the fired
/// subgraph (such layers would receive no gradient).
std::vector<std::string> untrainable_layers(const ModelGraph& g, const std::vector<TraceRecord>& traces);

/// trace_all_branches, refine_candidates and infer_interfaces in one call.
InterfaceMap trace_interfaces(const ModelGraph& g, const WeightStore& w, int unroll = 2, std::uint64_t seed = 0);

/// Total number of output interface ports across components.
std::size_t interface_count(const InterfaceMap& interfaces);

nlohmann::json trace_to_json(const ModelGraph& g, const TraceRecord& trace);

}  // namespace prunegraph
