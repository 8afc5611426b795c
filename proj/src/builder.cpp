#include "prunegraph/builder.hpp"

#include <cmath>
#include <set>

#include "prunegraph/error.hpp"
#include "prunegraph/rng.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

PortRef GraphBuilder::input(const std::string& id, std::vector<std::int64_t> shape) {
  g_.inputs.push_back(GraphInput{id, TensorSpec{std::move(shape)}});
  return PortRef{id, 0};
}

void GraphBuilder::component(const std::string& id, bool prunable, double importance_weight) {
  Component c;
  c.id = id;
  c.prunable = prunable;
  c.importance_weight = importance_weight;
  g_.components.push_back(std::move(c));
  current_ = id;
}

PortRef GraphBuilder::layer(const std::string& id, LayerKind kind, LayerAttrs attrs, const std::vector<PortRef>& srcs) {
  if (current_.empty()) throw Error(ErrorKind::InvalidArgument, "layer '" + id + "' added before any component");
  g_.nodes.push_back(LayerNode{id, kind, std::move(attrs), current_});
  for (std::size_t p = 0; p < srcs.size(); ++p) {
    if (!srcs[p].node.empty()) connect(srcs[p], PortRef{id, static_cast<int>(p)});
  }
  return PortRef{id, 0};
}

PortRef GraphBuilder::linear(const std::string& id, const PortRef& src, std::int64_t in, std::int64_t out) {
  LayerAttrs a;
  a.in_dim = in;
  a.out_dim = out;
  return layer(id, LayerKind::Linear, a, {src});
}

PortRef GraphBuilder::conv(const std::string& id, const PortRef& src, std::int64_t in_ch, std::int64_t out_ch,
                           std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
  LayerAttrs a;
  a.in_ch = in_ch;
  a.out_ch = out_ch;
  a.kernel = kernel;
  a.stride = stride;
  a.padding = padding;
  return layer(id, LayerKind::Conv2d, a, {src});
}

PortRef GraphBuilder::batchnorm(const std::string& id, const PortRef& src, std::int64_t channels) {
  LayerAttrs a;
  a.channels = channels;
  return layer(id, LayerKind::BatchNorm, a, {src});
}

PortRef GraphBuilder::activation(const std::string& id, const PortRef& src, const std::string& fn) {
  LayerAttrs a;
  a.activation = fn;
  return layer(id, LayerKind::Activation, a, {src});
}

PortRef GraphBuilder::flatten(const std::string& id, const PortRef& src) {
  return layer(id, LayerKind::Flatten, {}, {src});
}

PortRef GraphBuilder::identity(const std::string& id, const PortRef& src) {
  return layer(id, LayerKind::Identity, {}, {src});
}

PortRef GraphBuilder::concat(const std::string& id, const std::vector<PortRef>& srcs, std::vector<std::int64_t> sizes) {
  LayerAttrs a;
  a.sizes = std::move(sizes);
  return layer(id, LayerKind::Concat, a, srcs);
}

PortRef GraphBuilder::add(const std::string& id, const std::vector<PortRef>& srcs) {
  LayerAttrs a;
  a.arity = static_cast<std::int64_t>(srcs.size());
  return layer(id, LayerKind::Add, a, srcs);
}

std::vector<PortRef> GraphBuilder::split(const std::string& id, const PortRef& src, std::vector<std::int64_t> sizes) {
  LayerAttrs a;
  a.sizes = std::move(sizes);
  const auto n = a.sizes.size();
  layer(id, LayerKind::Split, a, {src});
  std::vector<PortRef> outs;
  for (std::size_t p = 0; p < n; ++p) outs.push_back(PortRef{id, static_cast<int>(p)});
  return outs;
}

void GraphBuilder::connect(const PortRef& src, const PortRef& dst, bool recurrent, bool conditional) {
  g_.edges.push_back(Edge{src, dst, recurrent, conditional});
}

void GraphBuilder::output(const std::string& id, const PortRef& src) {
  g_.outputs.push_back(GraphOutput{id, src, {}});
}

ModelGraph GraphBuilder::finish() {
  ModelGraph g = g_;
  g.reindex();
  ValidationReport report;
  const ShapeTable shapes = infer_shapes(g, &report);
  if (!report.ok()) throw Error(ErrorKind::Integrity, "built graph is inconsistent:\n" + report.summary());
  for (auto& o : g.outputs) {
    if (const auto* in = g.find_input(o.src.node)) {
      o.spec = in->spec;
      continue;
    }
    const auto& spec = shapes.at(o.src.node).out.at(static_cast<std::size_t>(o.src.port));
    if (!spec) throw Error(ErrorKind::Integrity, "output '" + o.id + "' has no inferable shape");
    o.spec = *spec;
  }
  std::map<std::string, std::set<PortRef>> ins, outs;
  for (const auto& e : g.edges) {
    const auto* a = g.find_node(e.src.node);
    const auto* b = g.find_node(e.dst.node);
    if (!a || !b || a->component == b->component) continue;
    outs[a->component].insert(e.src);
    ins[b->component].insert(e.dst);
  }
  for (auto& c : g.components) {
    c.declared_inputs.assign(ins[c.id].begin(), ins[c.id].end());
    c.declared_outputs.assign(outs[c.id].begin(), outs[c.id].end());
  }
  g.canonicalize();
  require_valid(g);
  return g;
}

WeightStore random_weights(const ModelGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  WeightStoreBuilder builder;
  for (const auto& n : g.nodes) {
    const auto& a = n.attrs;
    for (const auto& [name, shape] : expected_tensors(n)) {
      std::int64_t count = 1;
      for (auto s : shape) count *= s;
      std::vector<float> values(static_cast<std::size_t>(count));
      if (n.kind == LayerKind::BatchNorm) {
        const bool around_one = name == "gamma" || name == "running_var";
        for (auto& v : values) v = static_cast<float>(around_one ? rng.uniform(0.5, 1.5) : rng.uniform(-0.1, 0.1));
      } else {
        const auto fan_in = n.kind == LayerKind::Linear ? a.in_dim : a.in_ch * a.kernel * a.kernel;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
      }
      builder.add(n.id, name, shape, std::move(values));
    }
  }
  return std::move(builder).build();
}

}  // namespace prunegraph
