#include "prunegraph/train.hpp"

#include <algorithm>
#include <cmath>

#include "prunegraph/error.hpp"
#include "prunegraph/kernels.hpp"
#include "prunegraph/rng.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

double dataset_loss(const ModelGraph& g, const WeightStore& w, const Dataset& data, int unroll) {
  const auto n = static_cast<std::int64_t>(data.inputs.size());
  if (n == 0) return 0.0;
  std::vector<double> per(static_cast<std::size_t>(n), 0.0);
  ExecOptions opts;
  opts.unroll = unroll;
  opts.parallel = false;
  opts.record = false;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto y = concat_outputs(execute(g, w, data.inputs[k], opts).outputs);
    const auto& t = data.targets[k];
    if (y.size() != t.size()) throw Error(ErrorKind::ShapeMismatch, "output width differs from the targets");
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double d = static_cast<double>(y[j]) - t[j];
      s += d * d;
    }
    per[k] = s;
  }
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(n);
}

ToyTask toy_task(std::uint64_t seed, const std::string& arch, std::size_t samples) {
  ToyTask task;
  task.teacher = build_zoo_model(arch, seed);
  task.data.inputs = random_inputs(task.teacher.graph, samples, seed + 1);
  ExecOptions opts;
  opts.record = false;
  for (const auto& in : task.data.inputs)
    task.data.targets.push_back(concat_outputs(execute(task.teacher.graph, task.teacher.weights, in, opts).outputs));
  // Shared, immutable state: safe for concurrent sweep jobs.
  auto data = std::make_shared<const Dataset>(task.data);
  task.eval = [data](const ModelGraph& g, const WeightStore& w) { return dataset_loss(g, w, *data); };
  return task;
}

namespace {

using Vec = std::vector<double>;

struct Source {
  enum Kind { Zero, Input, Node } kind = Zero;
  std::size_t index = 0;
  std::size_t port = 0;
  bool recurrent = false;
};

// Forward/backward interpreter over one sample at a time, in double.
class Tape {
 public:
  Tape(const ModelGraph& g, const WeightStore& w, int unroll) : g_(g), unroll_(unroll) {
    auto order = topo_order(g);
    if (!order) throw Error(ErrorKind::Runtime, "graph has a non-recurrent cycle");
    order_ = *order;
    const auto shapes = infer_shapes(g);
    sources_.resize(g.nodes.size());
    woff_.assign(g.nodes.size(), 0);
    boff_.assign(g.nodes.size(), 0);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const auto& n = g.nodes[i];
      if (n.kind == LayerKind::Conv2d || n.kind == LayerKind::BatchNorm)
        throw Error(ErrorKind::InvalidArgument, std::string("trainer does not support ") + to_string(n.kind));
      if (n.kind == LayerKind::Linear) {
        woff_[i] = w.entry(n.id, "weight").offset / sizeof(float);
        boff_[i] = w.entry(n.id, "bias").offset / sizeof(float);
      }
      sources_[i].resize(n.num_inputs());
      widths_.emplace_back();
      for (const auto& s : shapes.at(n.id).out) widths_.back().push_back(static_cast<std::size_t>(s->numel()));
    }
    for (const auto& e : g.edges) {
      const auto dst = *g.node_index(e.dst.node);
      Source s;
      s.recurrent = e.recurrent;
      s.port = static_cast<std::size_t>(e.src.port);
      if (g.find_input(e.src.node)) {
        s.kind = Source::Input;
        for (std::size_t k = 0; k < g.inputs.size(); ++k)
          if (g.inputs[k].id == e.src.node) s.index = k;
      } else {
        s.kind = Source::Node;
        s.index = *g.node_index(e.src.node);
      }
      sources_[dst][static_cast<std::size_t>(e.dst.port)] = s;
    }
    for (const auto& o : g.outputs) {
      if (g.find_input(o.src.node)) throw Error(ErrorKind::InvalidArgument, "output reads a graph input directly");
      outputs_.emplace_back(*g.node_index(o.src.node), static_cast<std::size_t>(o.src.port));
    }
  }

  // values[t][node][port]
  using Values = std::vector<std::vector<std::vector<Vec>>>;

  Values forward(const std::vector<float>& blob, const InputSet& in) const {
    Values v(static_cast<std::size_t>(unroll_), std::vector<std::vector<Vec>>(g_.nodes.size()));
    std::vector<Vec> inputs;
    for (const auto& t : in) inputs.emplace_back(t.data.begin(), t.data.end());
    for (std::size_t t = 0; t < v.size(); ++t) {
      for (auto idx : order_) {
        std::vector<const Vec*> x(sources_[idx].size());
        std::vector<Vec> zeros;
        zeros.reserve(x.size());
        for (std::size_t p = 0; p < x.size(); ++p) x[p] = resolve(v, inputs, idx, p, t, zeros);
        v[t][idx] = run(idx, blob, x);
      }
    }
    return v;
  }

  std::vector<double> outputs(const Values& v) const {
    std::vector<double> y;
    for (const auto& [node, port] : outputs_) {
      const auto& o = v.back()[node][port];
      y.insert(y.end(), o.begin(), o.end());
    }
    return y;
  }

  // Accumulates d(loss)/d(blob) into grad given d(loss)/d(outputs).
  void backward(const std::vector<float>& blob, const InputSet& in, const Values& v, const std::vector<double>& dy,
                std::vector<double>& grad) const {
    Values gr(v.size(), std::vector<std::vector<Vec>>(g_.nodes.size()));
    for (std::size_t t = 0; t < v.size(); ++t)
      for (std::size_t i = 0; i < g_.nodes.size(); ++i)
        for (const auto& port : v[t][i]) gr[t][i].emplace_back(port.size(), 0.0);
    std::size_t at = 0;
    for (const auto& [node, port] : outputs_) {
      auto& gport = gr.back()[node][port];
      for (auto& x : gport) x += dy[at++];
    }
    std::vector<Vec> inputs;
    for (const auto& t : in) inputs.emplace_back(t.data.begin(), t.data.end());
    for (std::size_t t = v.size(); t-- > 0;) {
      for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        const auto idx = *it;
        std::vector<const Vec*> x(sources_[idx].size());
        std::vector<Vec> zeros;
        zeros.reserve(x.size());
        for (std::size_t p = 0; p < x.size(); ++p) x[p] = resolve(v, inputs, idx, p, t, zeros);
        const auto gin = back(idx, blob, x, v[t][idx], gr[t][idx], grad);
        for (std::size_t p = 0; p < gin.size(); ++p) {
          const auto& s = sources_[idx][p];
          if (s.kind != Source::Node || (s.recurrent && t == 0)) continue;
          auto& dst = gr[s.recurrent ? t - 1 : t][s.index][s.port];
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += gin[p][k];
        }
      }
    }
  }

 private:
  const Vec* resolve(const Values& v, const std::vector<Vec>& inputs, std::size_t idx, std::size_t p, std::size_t t,
                     std::vector<Vec>& zeros) const {
    const auto& s = sources_[idx][p];
    if (s.kind == Source::Input) return &inputs[s.index];
    if (s.kind == Source::Node && !(s.recurrent && t == 0)) return &v[s.recurrent ? t - 1 : t][s.index][s.port];
    // Zero state: width of the producer's port.
    zeros.emplace_back(widths_[s.index][s.port], 0.0);
    return &zeros.back();
  }

  std::vector<Vec> run(std::size_t idx, const std::vector<float>& blob, const std::vector<const Vec*>& x) const {
    const auto& n = g_.nodes[idx];
    const auto& a = n.attrs;
    std::vector<Vec> out;
    switch (n.kind) {
      case LayerKind::Linear: {
        Vec y(static_cast<std::size_t>(a.out_dim));
        const auto in = static_cast<std::size_t>(a.in_dim);
        for (std::size_t o = 0; o < y.size(); ++o) {
          double acc = blob[boff_[idx] + o];
          const float* row = blob.data() + woff_[idx] + o * in;
          for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * (*x[0])[i];
          y[o] = acc;
        }
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::Activation: {
        Vec y = *x[0];
        for (auto& e : y) {
          if (a.activation == "relu")
            e = e > 0.0 ? e : 0.0;
          else if (a.activation == "tanh")
            e = std::tanh(e);
          else
            e = 1.0 / (1.0 + std::exp(-e));
        }
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Identity:
        out.push_back(*x[0]);
        break;
      case LayerKind::Concat: {
        Vec y;
        for (const auto* p : x) y.insert(y.end(), p->begin(), p->end());
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::Add: {
        Vec y = *x[0];
        for (std::size_t p = 1; p < x.size(); ++p)
          for (std::size_t k = 0; k < y.size(); ++k) y[k] += (*x[p])[k];
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::Split: {
        std::size_t at = 0;
        for (auto s : a.sizes) {
          out.emplace_back(x[0]->begin() + static_cast<std::ptrdiff_t>(at),
                           x[0]->begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(s)));
          at += static_cast<std::size_t>(s);
        }
        break;
      }
      default:
        throw Error(ErrorKind::InvalidArgument, "unsupported layer in trainer");
    }
    return out;
  }

  std::vector<Vec> back(std::size_t idx, const std::vector<float>& blob, const std::vector<const Vec*>& x,
                        const std::vector<Vec>& y, const std::vector<Vec>& gy, std::vector<double>& grad) const {
    const auto& n = g_.nodes[idx];
    const auto& a = n.attrs;
    std::vector<Vec> gin;
    switch (n.kind) {
      case LayerKind::Linear: {
        const auto in = static_cast<std::size_t>(a.in_dim);
        Vec gx(in, 0.0);
        for (std::size_t o = 0; o < gy[0].size(); ++o) {
          const double go = gy[0][o];
          if (go == 0.0) continue;
          grad[boff_[idx] + o] += go;
          const float* row = blob.data() + woff_[idx] + o * in;
          double* grow = grad.data() + woff_[idx] + o * in;
          for (std::size_t i = 0; i < in; ++i) {
            grow[i] += go * (*x[0])[i];
            gx[i] += go * row[i];
          }
        }
        gin.push_back(std::move(gx));
        break;
      }
      case LayerKind::Activation: {
        Vec gx = gy[0];
        for (std::size_t k = 0; k < gx.size(); ++k) {
          const double out = y[0][k];
          if (a.activation == "relu")
            gx[k] *= out > 0.0 ? 1.0 : 0.0;
          else if (a.activation == "tanh")
            gx[k] *= 1.0 - out * out;
          else
            gx[k] *= out * (1.0 - out);
        }
        gin.push_back(std::move(gx));
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Identity:
        gin.push_back(gy[0]);
        break;
      case LayerKind::Concat: {
        std::size_t at = 0;
        for (const auto* p : x) {
          gin.emplace_back(gy[0].begin() + static_cast<std::ptrdiff_t>(at),
                           gy[0].begin() + static_cast<std::ptrdiff_t>(at + p->size()));
          at += p->size();
        }
        break;
      }
      case LayerKind::Add:
        gin.assign(x.size(), gy[0]);
        break;
      case LayerKind::Split: {
        Vec gx;
        for (const auto& part : gy) gx.insert(gx.end(), part.begin(), part.end());
        gin.push_back(std::move(gx));
        break;
      }
      default:
        throw Error(ErrorKind::InvalidArgument, "unsupported layer in trainer");
    }
    return gin;
  }

  const ModelGraph& g_;
  int unroll_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<Source>> sources_;
  std::vector<std::vector<std::size_t>> widths_;
  std::vector<std::size_t> woff_, boff_;
  std::vector<std::pair<std::size_t, std::size_t>> outputs_;
};

constexpr std::size_t kChunks = 8;

// Sum over fixed chunks so the result does not depend on the thread count.
std::vector<double> batch_gradient(const Tape& tape, const std::vector<float>& blob, const Dataset& data,
                                   const std::vector<std::size_t>& samples, bool parallel) {
  const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(samples.size(), 1));
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(blob.size(), 0.0));
  std::vector<std::exception_ptr> failures(chunks);
  const double scale = 2.0 / static_cast<double>(std::max<std::size_t>(samples.size(), 1));
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count()) if (parallel)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    try {
      const auto ci = static_cast<std::size_t>(c);
      for (std::size_t k = ci; k < samples.size(); k += chunks) {
        const auto s = samples[k];
        const auto v = tape.forward(blob, data.inputs[s]);
        auto y = tape.outputs(v);
        const auto& t = data.targets[s];
        if (y.size() != t.size()) throw Error(ErrorKind::ShapeMismatch, "output width differs from the targets");
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = scale * (y[j] - t[j]);
        tape.backward(blob, data.inputs[s], v, y, partial[ci]);
      }
    } catch (...) {
      failures[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  for (std::size_t c = 1; c < chunks; ++c)
    for (std::size_t i = 0; i < blob.size(); ++i) partial[0][i] += partial[c][i];
  return std::move(partial[0]);
}

}  // namespace

std::vector<double> loss_gradient(const ModelGraph& g, const WeightStore& w, const Dataset& data,
                                  const std::vector<std::size_t>& samples, int unroll) {
  const Tape tape(g, w, unroll);
  return batch_gradient(tape, w.blob(), data, samples, false);
}

TrainResult train(const ModelGraph& g, const WeightStore& init, const Dataset& data, const TrainOptions& opts) {
  if (opts.batch == 0 || opts.epochs < 0) throw Error(ErrorKind::InvalidArgument, "bad training options");
  const Tape tape(g, init, opts.unroll);
  std::vector<float> blob = init.blob();
  std::vector<double> m(blob.size(), 0.0), v(blob.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  Rng rng(opts.seed);
  std::vector<std::size_t> order(data.inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  TrainResult result;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);
    for (std::size_t start = 0; start < order.size(); start += opts.batch) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(order.size(), start + opts.batch)));
      const auto grad = batch_gradient(tape, blob, data, batch, opts.parallel);
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t i = 0; i < blob.size(); ++i) {
        m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / (1 - b1t), vhat = v[i] / (1 - b2t);
        blob[i] -= static_cast<float>(opts.lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
    result.epoch_loss.push_back(dataset_loss(g, WeightStore(init.manifest(), blob), data, opts.unroll));
  }
  result.weights = WeightStore(init.manifest(), std::move(blob));
  return result;
}

}  // namespace prunegraph
