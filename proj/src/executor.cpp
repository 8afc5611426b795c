#include "prunegraph/executor.hpp"

#include <cmath>
#include <numeric>

#include "prunegraph/error.hpp"
#include "prunegraph/kernels.hpp"
#include "prunegraph/rng.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

std::set<PortRef> TraceRecord::producers_of(const PortRef& port) const {
  std::set<PortRef> out;
  auto it = lineage.find(TensorKey{port, unroll_steps - 1});
  if (it == lineage.end()) return out;
  for (const auto& k : it->second) out.insert(k.port);
  return out;
}

namespace {

constexpr float kBatchNormEps = 1e-5f;

float activate(const std::string& name, float x) {
  if (name == "relu") return x > 0.0f ? x : 0.0f;
  if (name == "tanh") return std::tanh(x);
  return 1.0f / (1.0f + std::exp(-x));
}

std::vector<Tensor> run_layer(const LayerNode& n, const WeightStore& w, const std::vector<const Tensor*>& in,
                              const NodeShapes& shapes, bool parallel) {
  const auto& a = n.attrs;
  std::vector<Tensor> out;
  out.reserve(n.num_outputs());
  for (const auto& s : shapes.out) out.emplace_back(s.value_or(TensorSpec{}));
  switch (n.kind) {
    case LayerKind::Linear: {
      auto weight = w.tensor(n.id, "weight");
      auto bias = w.tensor(n.id, "bias");
      if (parallel)
        kernels::linear_omp(weight, bias, in[0]->data, out[0].data);
      else
        kernels::linear_serial(weight, bias, in[0]->data, out[0].data);
      break;
    }
    case LayerKind::Conv2d: {
      const auto& is = in[0]->spec.shape;
      const auto& os = out[0].spec.shape;
      kernels::ConvGeometry geo{is[0], is[1], is[2], os[0], os[1], os[2], a.kernel, a.stride, a.padding};
      auto weight = w.tensor(n.id, "weight");
      auto bias = w.tensor(n.id, "bias");
      if (parallel)
        kernels::conv2d_omp(geo, weight, bias, in[0]->data, out[0].data);
      else
        kernels::conv2d_serial(geo, weight, bias, in[0]->data, out[0].data);
      break;
    }
    case LayerKind::BatchNorm: {
      auto gamma = w.tensor(n.id, "gamma");
      auto beta = w.tensor(n.id, "beta");
      auto mean = w.tensor(n.id, "running_mean");
      auto var = w.tensor(n.id, "running_var");
      const std::size_t plane = in[0]->size() / static_cast<std::size_t>(a.channels);
      for (std::size_t c = 0; c < static_cast<std::size_t>(a.channels); ++c) {
        const float scale = gamma[c] / std::sqrt(var[c] + kBatchNormEps);
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = c * plane + p;
          out[0].data[i] = (in[0]->data[i] - mean[c]) * scale + beta[c];
        }
      }
      break;
    }
    case LayerKind::Activation:
      for (std::size_t i = 0; i < in[0]->size(); ++i) out[0].data[i] = activate(a.activation, in[0]->data[i]);
      break;
    case LayerKind::Flatten:
    case LayerKind::Identity:
      out[0].data = in[0]->data;
      break;
    case LayerKind::Concat: {
      std::size_t at = 0;
      for (const auto* t : in) {
        std::copy(t->data.begin(), t->data.end(), out[0].data.begin() + static_cast<std::ptrdiff_t>(at));
        at += t->size();
      }
      break;
    }
    case LayerKind::Add: {
      out[0].data = in[0]->data;
      for (std::size_t p = 1; p < in.size(); ++p)
        for (std::size_t i = 0; i < out[0].size(); ++i) out[0].data[i] += in[p]->data[i];
      break;
    }
    case LayerKind::Split: {
      std::size_t at = 0;
      for (auto& o : out) {
        std::copy(in[0]->data.begin() + static_cast<std::ptrdiff_t>(at),
                  in[0]->data.begin() + static_cast<std::ptrdiff_t>(at + o.size()), o.data.begin());
        at += o.size();
      }
      break;
    }
  }
  return out;
}

}  // namespace

ExecResult execute(const ModelGraph& g, const WeightStore& w, const InputSet& inputs, const ExecOptions& opts) {
  if (opts.unroll < 1) throw Error(ErrorKind::InvalidArgument, "unroll must be >= 1");
  if (inputs.size() != g.inputs.size())
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(g.inputs.size()) + " input tensors");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].spec != g.inputs[i].spec || inputs[i].size() != static_cast<std::size_t>(g.inputs[i].spec.numel()))
      throw Error(ErrorKind::ShapeMismatch, "input '" + g.inputs[i].id + "' has spec " + to_string(inputs[i].spec) +
                                                ", expected " + to_string(g.inputs[i].spec));
  }
  auto order = topo_order(g);
  if (!order) throw Error(ErrorKind::Runtime, "graph has a non-recurrent cycle");
  const ShapeTable shapes = infer_shapes(g);

  std::map<PortRef, std::vector<std::size_t>> feeders;
  for (std::size_t e = 0; e < g.edges.size(); ++e) feeders[g.edges[e].dst].push_back(e);

  const std::size_t steps = static_cast<std::size_t>(opts.unroll);
  // values[step][node index][port]
  std::vector<std::vector<std::vector<Tensor>>> values(steps, std::vector<std::vector<Tensor>>(g.nodes.size()));
  ExecResult result;
  TraceRecord& trace = result.trace;
  trace.unroll_steps = opts.unroll;
  trace.branch = opts.branch;

  auto input_index = [&](const std::string& id) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < g.inputs.size(); ++i)
      if (g.inputs[i].id == id) return i;
    return std::nullopt;
  };

  for (std::size_t t = 0; t < steps; ++t) {
    for (auto idx : *order) {
      const auto& node = g.nodes[idx];
      const auto& ns = shapes.at(node.id);
      std::vector<Tensor> zeros;
      zeros.reserve(node.num_inputs());
      std::vector<const Tensor*> in(node.num_inputs(), nullptr);
      std::set<TensorKey> ancestry;
      for (std::size_t p = 0; p < node.num_inputs(); ++p) {
        auto it = feeders.find(PortRef{node.id, static_cast<int>(p)});
        if (it == feeders.end() || it->second.empty())
          throw Error(ErrorKind::Runtime, "unconnected input " + to_string(PortRef{node.id, static_cast<int>(p)}));
        const std::size_t eidx = it->second.front();
        const Edge& e = g.edges[eidx];
        const bool gated_off = e.conditional && !opts.branch;
        const bool no_state = e.recurrent && t == 0;
        if (gated_off || no_state) {
          zeros.emplace_back(ns.in[p].value_or(TensorSpec{}));
          in[p] = &zeros.back();
          continue;
        }
        const std::size_t src_step = e.recurrent ? t - 1 : t;
        if (auto gi = input_index(e.src.node)) {
          in[p] = &inputs[*gi];
        } else {
          const auto si = *g.node_index(e.src.node);
          in[p] = &values[src_step][si].at(static_cast<std::size_t>(e.src.port));
          if (opts.record) {
            TensorKey src{e.src, static_cast<int>(src_step)};
            ancestry.insert(src);
            const auto& up = trace.lineage[src];
            ancestry.insert(up.begin(), up.end());
          }
        }
        trace.fired_edges.insert(eidx);
        trace.fired_steps[eidx].push_back(static_cast<int>(t));
        if (ns.in[p] && in[p]->spec != *ns.in[p])
          throw Error(ErrorKind::ShapeMismatch, "edge " + edge_id(e) + " carries " + to_string(in[p]->spec) +
                                                    ", expected " + to_string(*ns.in[p]));
      }
      values[t][idx] = run_layer(node, w, in, ns, opts.parallel);
      if (t + 1 == steps) {
        auto& oin = trace.observed_in[node.id];
        oin.clear();
        for (const auto* x : in) oin.push_back(x->spec);
        auto& oout = trace.observed_out[node.id];
        oout.clear();
        for (const auto& y : values[t][idx]) oout.push_back(y.spec);
      }
      if (opts.record) {
        for (std::size_t q = 0; q < node.num_outputs(); ++q)
          trace.lineage[TensorKey{PortRef{node.id, static_cast<int>(q)}, static_cast<int>(t)}] = ancestry;
      }
    }
  }

  for (const auto& o : g.outputs) {
    if (auto gi = input_index(o.src.node)) {
      result.outputs.push_back(inputs[*gi]);
      continue;
    }
    const auto si = *g.node_index(o.src.node);
    const Tensor& y = values[steps - 1][si].at(static_cast<std::size_t>(o.src.port));
    for (float v : y.data) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "output '" + o.id + "' is not finite");
    }
    result.outputs.push_back(y);
  }
  return result;
}

std::vector<float> concat_outputs(const std::vector<Tensor>& outputs) {
  std::vector<float> flat;
  for (const auto& t : outputs) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

double functional_distance(const ModelGraph& g1, const WeightStore& w1, const ModelGraph& g2, const WeightStore& w2,
                           const std::vector<InputSet>& inputs, const ExecOptions& opts) {
  if (g1.inputs.size() != g2.inputs.size())
    throw Error(ErrorKind::ShapeMismatch, "graphs take different numbers of inputs");
  for (std::size_t i = 0; i < g1.inputs.size(); ++i) {
    if (g1.inputs[i].spec != g2.inputs[i].spec)
      throw Error(ErrorKind::ShapeMismatch, "entry specs differ at input '" + g1.inputs[i].id + "'");
  }
  ExecOptions o = opts;
  o.record = false;
  double worst = 0.0;
  for (const auto& in : inputs) {
    const auto y1 = concat_outputs(execute(g1, w1, in, o).outputs);
    const auto y2 = concat_outputs(execute(g2, w2, in, o).outputs);
    if (y1.size() != y2.size()) throw Error(ErrorKind::ShapeMismatch, "exit specs differ");
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) {
      const double d = static_cast<double>(y1[i]) - y2[i];
      diff += d * d;
      ref += static_cast<double>(y1[i]) * y1[i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12));
  }
  return worst;
}

std::vector<InputSet> random_inputs(const ModelGraph& g, std::size_t count, std::uint64_t seed, bool unit_norm) {
  Rng rng(seed);
  std::vector<InputSet> sets(count);
  for (auto& set : sets) {
    for (const auto& in : g.inputs) {
      Tensor t(in.spec);
      for (auto& v : t.data) v = static_cast<float>(rng.normal());
      if (unit_norm) {
        double n2 = 0.0;
        for (float v : t.data) n2 += static_cast<double>(v) * v;
        const float scale = static_cast<float>(1.0 / std::max(std::sqrt(n2), 1e-12));
        for (auto& v : t.data) v *= scale;
      }
      set.push_back(std::move(t));
    }
  }
  return sets;
}

}  // namespace prunegraph
