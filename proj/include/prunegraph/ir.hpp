#pragma once

// Neutral model representation: typed layer nodes, port-to-port tensor edges,
// and the declared component partition.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace prunegraph {

/// Feature tensor shape with the batch dimension excluded. Rank 1 is a
/// feature vector, rank 3 is channels x height x width.
struct TensorSpec {
  std::vector<std::int64_t> shape;

  std::int64_t channels() const { return shape.empty() ? 0 : shape.front(); }
  std::int64_t numel() const;
  std::size_t rank() const { return shape.size(); }
  bool operator==(const TensorSpec&) const = default;
};

std::string to_string(const TensorSpec& spec);

enum class LayerKind { Linear, Conv2d, BatchNorm, Activation, Flatten, Concat, Add, Split, Identity };

const char* to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(const std::string& name);
bool is_parameterized(LayerKind kind);

struct LayerAttrs {
  std::int64_t in_dim = 0;
  std::int64_t out_dim = 0;
  std::int64_t in_ch = 0;
  std::int64_t out_ch = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 0;
  std::int64_t padding = 0;
  std::int64_t channels = 0;  // batchnorm
  std::int64_t arity = 0;     // add
  std::string activation;     // relu | tanh | sigmoid
  std::vector<std::int64_t> sizes;  // concat inputs / split outputs, channel axis

  bool operator==(const LayerAttrs&) const = default;
};

struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::Identity;
  LayerAttrs attrs;
  std::string component;

  std::size_t num_inputs() const;
  std::size_t num_outputs() const;
  bool operator==(const LayerNode&) const = default;
};

/// A (node, port) endpoint. Graph inputs are addressed as (input id, 0).
struct PortRef {
  std::string node;
  int port = 0;

  auto operator<=>(const PortRef&) const = default;
};

std::string to_string(const PortRef& ref);

struct Edge {
  PortRef src;
  PortRef dst;
  bool recurrent = false;
  bool conditional = false;

  bool operator==(const Edge&) const = default;
};

std::string edge_id(const Edge& edge);

struct Component {
  std::string id;
  std::vector<PortRef> declared_inputs;
  std::vector<PortRef> declared_outputs;
  bool prunable = true;
  double importance_weight = 1.0;

  bool operator==(const Component&) const = default;
};

struct GraphInput {
  std::string id;
  TensorSpec spec;
  bool operator==(const GraphInput&) const = default;
};

struct GraphOutput {
  std::string id;
  PortRef src;
  TensorSpec spec;
  bool operator==(const GraphOutput&) const = default;
};

class ModelGraph {
 public:
  std::vector<LayerNode> nodes;
  std::vector<Edge> edges;
  std::vector<Component> components;
  std::vector<GraphInput> inputs;
  std::vector<GraphOutput> outputs;

  /// Rebuilds the id lookup tables; call after mutating nodes/components/inputs.
  void reindex();

  const LayerNode* find_node(const std::string& id) const;
  LayerNode* find_node(const std::string& id);
  const Component* find_component(const std::string& id) const;
  const GraphInput* find_input(const std::string& id) const;
  std::optional<std::size_t> node_index(const std::string& id) const;
  std::optional<std::size_t> component_index(const std::string& id) const;

  /// Sorts nodes, components, inputs, outputs by id and edges by (src, dst).
  void canonicalize();

  bool structurally_equal(const ModelGraph& other) const;

 private:
  std::unordered_map<std::string, std::size_t> node_lookup_;
  std::unordered_map<std::string, std::size_t> component_lookup_;
  std::unordered_map<std::string, std::size_t> input_lookup_;
};

}  // namespace prunegraph
