#include "prunegraph/ir.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "prunegraph/error.hpp"

namespace prunegraph {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Io: return "I/O";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::TruncatedBlob: return "truncated-blob";
    case ErrorKind::Runtime: return "runtime";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::DeclarationConflict: return "declaration-conflict";
    case ErrorKind::Unmappable: return "unmappable-index";
    case ErrorKind::MissingInterfaces: return "missing-interfaces";
    case ErrorKind::MissingWeights: return "missing-weights";
    case ErrorKind::SizeCap: return "size-cap";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

std::int64_t TensorSpec::numel() const {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string to_string(const TensorSpec& spec) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < spec.shape.size(); ++i) {
    if (i) os << 'x';
    os << spec.shape[i];
  }
  os << ']';
  return os.str();
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Activation: return "activation";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Concat: return "concat";
    case LayerKind::Add: return "add";
    case LayerKind::Split: return "split";
    case LayerKind::Identity: return "identity";
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(const std::string& name) {
  static const std::pair<const char*, LayerKind> table[] = {
      {"linear", LayerKind::Linear},   {"conv2d", LayerKind::Conv2d},
      {"batchnorm", LayerKind::BatchNorm}, {"activation", LayerKind::Activation},
      {"flatten", LayerKind::Flatten}, {"concat", LayerKind::Concat},
      {"add", LayerKind::Add},         {"split", LayerKind::Split},
      {"identity", LayerKind::Identity},
  };
  for (const auto& [key, kind] : table) {
    if (name == key) return kind;
  }
  return std::nullopt;
}

bool is_parameterized(LayerKind kind) {
  return kind == LayerKind::Linear || kind == LayerKind::Conv2d || kind == LayerKind::BatchNorm;
}

std::size_t LayerNode::num_inputs() const {
  switch (kind) {
    case LayerKind::Concat: return attrs.sizes.size();
    case LayerKind::Add: return static_cast<std::size_t>(std::max<std::int64_t>(attrs.arity, 0));
    default: return 1;
  }
}

std::size_t LayerNode::num_outputs() const {
  return kind == LayerKind::Split ? attrs.sizes.size() : 1;
}

std::string to_string(const PortRef& ref) { return ref.node + ":" + std::to_string(ref.port); }

std::string edge_id(const Edge& edge) { return to_string(edge.src) + "->" + to_string(edge.dst); }

void ModelGraph::reindex() {
  node_lookup_.clear();
  component_lookup_.clear();
  input_lookup_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) node_lookup_.emplace(nodes[i].id, i);
  for (std::size_t i = 0; i < components.size(); ++i) component_lookup_.emplace(components[i].id, i);
  for (std::size_t i = 0; i < inputs.size(); ++i) input_lookup_.emplace(inputs[i].id, i);
}

namespace {

template <typename Vec>
std::optional<std::size_t> lookup(const std::unordered_map<std::string, std::size_t>& index, const Vec& items,
                                  const std::string& id) {
  auto it = index.find(id);
  if (it != index.end() && it->second < items.size() && items[it->second].id == id) return it->second;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id == id) return i;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> ModelGraph::node_index(const std::string& id) const {
  return lookup(node_lookup_, nodes, id);
}

std::optional<std::size_t> ModelGraph::component_index(const std::string& id) const {
  return lookup(component_lookup_, components, id);
}

const LayerNode* ModelGraph::find_node(const std::string& id) const {
  auto i = node_index(id);
  return i ? &nodes[*i] : nullptr;
}

LayerNode* ModelGraph::find_node(const std::string& id) {
  auto i = node_index(id);
  return i ? &nodes[*i] : nullptr;
}

const Component* ModelGraph::find_component(const std::string& id) const {
  auto i = component_index(id);
  return i ? &components[*i] : nullptr;
}

const GraphInput* ModelGraph::find_input(const std::string& id) const {
  auto i = lookup(input_lookup_, inputs, id);
  return i ? &inputs[*i] : nullptr;
}

void ModelGraph::canonicalize() {
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::stable_sort(nodes.begin(), nodes.end(), by_id);
  std::stable_sort(components.begin(), components.end(), by_id);
  for (auto& c : components) {
    std::sort(c.declared_inputs.begin(), c.declared_inputs.end());
    std::sort(c.declared_outputs.begin(), c.declared_outputs.end());
  }
  std::stable_sort(inputs.begin(), inputs.end(), by_id);
  std::stable_sort(outputs.begin(), outputs.end(), by_id);
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.src != b.src) return a.src < b.src;
    return a.dst < b.dst;
  });
  reindex();
}

bool ModelGraph::structurally_equal(const ModelGraph& other) const {
  ModelGraph lhs = *this;
  ModelGraph rhs = other;
  lhs.canonicalize();
  rhs.canonicalize();
  return lhs.nodes == rhs.nodes && lhs.edges == rhs.edges && lhs.components == rhs.components &&
         lhs.inputs == rhs.inputs && lhs.outputs == rhs.outputs;
}

}  // namespace prunegraph
