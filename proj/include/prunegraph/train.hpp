#pragma once

// Teacher-matching toy task and a small gradient trainer for students built
// from linear, activation and routing layers (conv2d and batchnorm are not
// differentiated here).

#include <cstdint>
#include <string>
#include <vector>

#include "prunegraph/executor.hpp"
#include "prunegraph/prune.hpp"
#include "prunegraph/zoo.hpp"

namespace prunegraph {

struct Dataset {
  std::vector<InputSet> inputs;
  std::vector<std::vector<float>> targets;  // concatenated teacher outputs
};

/// Mean over samples of the summed squared output difference to the targets.
double dataset_loss(const ModelGraph& g, const WeightStore& w, const Dataset& data, int unroll = 2);

struct ToyTask {
  ZooModel teacher;
  Dataset data;
  TaskEval eval;  // dataset_loss against the frozen teacher; thread-safe
};

/// Frozen random teacher of the given zoo architecture and `samples`
/// standard-normal inputs, all seeded by `seed`.
ToyTask toy_task(std::uint64_t seed, const std::string& arch = "tdmpc_style", std::size_t samples = 1024);

struct TrainOptions {
  int epochs = 30;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;  // minibatch shuffling
  int unroll = 2;
  bool parallel = true;
};

struct TrainResult {
  WeightStore weights;
  std::vector<double> epoch_loss;  // training loss after each epoch
};

/// Adam on dataset_loss. Throws Error(InvalidArgument) for layer kinds the
/// trainer cannot differentiate.
TrainResult train(const ModelGraph& g, const WeightStore& init, const Dataset& data, const TrainOptions& opts = {});

/// Gradient of dataset_loss over the given samples with respect to every blob
/// entry (same layout as WeightStore::blob()).
std::vector<double> loss_gradient(const ModelGraph& g, const WeightStore& w, const Dataset& data,
                                  const std::vector<std::size_t>& samples, int unroll = 2);

}  // namespace prunegraph
