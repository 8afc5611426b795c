#pragma once

// Incremental construction of a ModelGraph. Layers join the current
// component; an empty PortRef leaves that input port unconnected so that
// recurrent or conditional edges can be attached later with connect().

#include <cstdint>
#include <string>
#include <vector>

#include "prunegraph/ir.hpp"
#include "prunegraph/weights.hpp"

namespace prunegraph {

class GraphBuilder {
 public:
  PortRef input(const std::string& id, std::vector<std::int64_t> shape);
  void component(const std::string& id, bool prunable = true, double importance_weight = 1.0);

  PortRef linear(const std::string& id, const PortRef& src, std::int64_t in, std::int64_t out);
  PortRef conv(const std::string& id, const PortRef& src, std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
               std::int64_t stride, std::int64_t padding);
  PortRef batchnorm(const std::string& id, const PortRef& src, std::int64_t channels);
  PortRef activation(const std::string& id, const PortRef& src, const std::string& fn = "relu");
  PortRef flatten(const std::string& id, const PortRef& src);
  PortRef identity(const std::string& id, const PortRef& src);
  PortRef concat(const std::string& id, const std::vector<PortRef>& srcs, std::vector<std::int64_t> sizes);
  PortRef add(const std::string& id, const std::vector<PortRef>& srcs);
  std::vector<PortRef> split(const std::string& id, const PortRef& src, std::vector<std::int64_t> sizes);

  void connect(const PortRef& src, const PortRef& dst, bool recurrent = false, bool conditional = false);
  void output(const std::string& id, const PortRef& src);

  /// Infers output specs, fills each component's declared interfaces from its
  /// cross-component edges, and canonicalizes.
  ModelGraph finish();

 private:
  PortRef layer(const std::string& id, LayerKind kind, LayerAttrs attrs, const std::vector<PortRef>& srcs);

  ModelGraph g_;
  std::string current_;
};

/// Seeded weights: linear/conv weights and biases uniform in +-1/sqrt(fan_in);
/// batchnorm gamma and running_var in [0.5, 1.5), beta and running_mean in
/// [-0.1, 0.1).
WeightStore random_weights(const ModelGraph& g, std::uint64_t seed);

}  // namespace prunegraph
