#pragma once

#include <vector>

#include "prunegraph/ir.hpp"

namespace prunegraph {

struct Tensor {
  TensorSpec spec;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(TensorSpec s) : spec(std::move(s)), data(static_cast<std::size_t>(spec.numel()), 0.0f) {}
  Tensor(TensorSpec s, std::vector<float> values) : spec(std::move(s)), data(std::move(values)) {}

  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

}  // namespace prunegraph
