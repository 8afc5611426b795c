#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "prunegraph/ir.hpp"
#include "prunegraph/tensor.hpp"
#include "prunegraph/weights.hpp"

namespace prunegraph {

struct ExecOptions {
  int unroll = 2;        // time steps; recurrent state starts at zero
  bool branch = true;    // conditional edges carry data only when set
  bool parallel = true;  // OpenMP kernels vs serial reference
  bool record = true;    // build lineage (costly on large graphs)
};

/// A produced tensor at a given unroll step.
struct TensorKey {
  PortRef port;
  int step = 0;
  auto operator<=>(const TensorKey&) const = default;
};

struct TraceRecord {
  int unroll_steps = 1;
  bool branch = true;
  std::map<std::string, std::vector<TensorSpec>> observed_in;
  std::map<std::string, std::vector<TensorSpec>> observed_out;
  /// Indices into ModelGraph::edges that carried a produced tensor.
  std::set<std::size_t> fired_edges;
  /// Steps at which each fired edge carried data.
  std::map<std::size_t, std::vector<int>> fired_steps;
  /// Transitive producers of every tensor, across unroll steps.
  std::map<TensorKey, std::set<TensorKey>> lineage;

  /// Final-step lineage projected onto (layer, port), dropping steps.
  std::set<PortRef> producers_of(const PortRef& port) const;
};

struct ExecResult {
  std::vector<Tensor> outputs;  // ModelGraph::outputs order
  TraceRecord trace;
};

using InputSet = std::vector<Tensor>;  // ModelGraph::inputs order

ExecResult execute(const ModelGraph& g, const WeightStore& w, const InputSet& inputs, const ExecOptions& opts = {});

/// max over inputs of ||y1 - y2|| / max(||y1||, 1e-12), outputs concatenated.
double functional_distance(const ModelGraph& g1, const WeightStore& w1, const ModelGraph& g2, const WeightStore& w2,
                           const std::vector<InputSet>& inputs, const ExecOptions& opts = {});

/// Seeded standard-normal inputs matching the graph's entry specs. With
/// unit_norm set, each tensor is rescaled to l2 norm 1.
std::vector<InputSet> random_inputs(const ModelGraph& g, std::size_t count, std::uint64_t seed,
                                    bool unit_norm = false);

/// Flattens all outputs into one vector.
std::vector<float> concat_outputs(const std::vector<Tensor>& outputs);

}  // namespace prunegraph
