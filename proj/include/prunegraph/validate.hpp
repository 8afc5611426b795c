#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prunegraph/ir.hpp"
#include "prunegraph/weights.hpp"

namespace prunegraph {

enum class ViolationKind { Integrity, Attr, Unconnected, ShapeMismatch, Cycle, Output, Interface, Manifest };

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string subject;  // edge id, node id, or tensor name
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  std::string summary() const;
};

struct NodeShapes {
  std::vector<std::optional<TensorSpec>> in;
  std::vector<std::optional<TensorSpec>> out;
};

using ShapeTable = std::unordered_map<std::string, NodeShapes>;

/// Node indices in dependency order, ignoring recurrent edges. Returns
/// nullopt when the non-recurrent subgraph has a cycle.
std::optional<std::vector<std::size_t>> topo_order(const ModelGraph& g);

/// Propagates specs from the graph inputs. Problems are appended to `report`
/// when given.
ShapeTable infer_shapes(const ModelGraph& g, ValidationReport* report = nullptr);

/// Shape matching along every edge (concat sums its contributors), acyclicity
/// modulo recurrent edges, attr completeness, and manifest consistency when
/// weights are supplied. An empty report means the graph is valid.
ValidationReport validate_graph(const ModelGraph& g, const WeightStore* weights = nullptr);

/// Throws Error(Integrity) with the report summary when validation fails.
void require_valid(const ModelGraph& g, const WeightStore* weights = nullptr);

}  // namespace prunegraph
