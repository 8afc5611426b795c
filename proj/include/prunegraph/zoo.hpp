#pragma once

// The six benchmark architectures, built natively in the IR, and the
// per-model grouping metrics table.

#include <cstdint>
#include <string>
#include <vector>

#include "prunegraph/dependency.hpp"
#include "prunegraph/ir.hpp"
#include "prunegraph/weights.hpp"

namespace prunegraph {

/// simple, branched, multipath, recursive, tdmpc_style, complex_cnn.
const std::vector<std::string>& zoo_names();

struct ZooModel {
  std::string name;
  ModelGraph graph;
  WeightStore weights;
};

/// Throws Error(InvalidArgument) for an unknown name.
ZooModel build_zoo_model(const std::string& name, std::uint64_t seed = 0);

/// depth: longest chain of linear/conv layers inside the component. in: input
/// width of the chain's entry layer. out: output width of its terminal layer.
/// heads: number of terminal linear/conv layers.
struct ComponentSummary {
  std::string id;
  int depth = 0;
  int heads = 1;
  std::int64_t in = 0;
  std::int64_t out = 0;

  /// "a: (1, 128->20)", or "d: (4(2), 36->1)" with two heads.
  std::string str() const;
};

std::vector<ComponentSummary> summarize_components(const ModelGraph& g);
/// Summaries joined by ", " in component id order.
std::string component_dims(const ModelGraph& g);

struct MetricsRow {
  std::string model;
  std::size_t components = 0;
  GroupStats vanilla;
  GroupStats aware;
  std::size_t interfaces = 0;  // traced output interfaces
  /// Direction and cross-count checks that failed for this row.
  std::vector<std::string> violations;
};

MetricsRow compute_metrics(const ZooModel& model);
std::vector<MetricsRow> report_metrics(const std::vector<std::string>& names);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string metrics_markdown(const std::vector<MetricsRow>& rows);

}  // namespace prunegraph
