#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prunegraph/ir.hpp"

namespace prunegraph {

struct TensorEntry {
  std::uint64_t offset = 0;  // bytes into the blob
  std::vector<std::int64_t> shape;

  std::int64_t numel() const;
  bool operator==(const TensorEntry&) const = default;
};

/// layer id -> tensor name -> entry. std::map keeps the manifest canonical.
using WeightManifest = std::map<std::string, std::map<std::string, TensorEntry>>;

/// Flat little-endian f32 blob plus a manifest of row-major tensors.
class WeightStore {
 public:
  WeightStore() = default;
  WeightStore(WeightManifest manifest, std::vector<float> blob);

  const WeightManifest& manifest() const { return manifest_; }
  const std::vector<float>& blob() const { return blob_; }

  bool has_layer(const std::string& layer) const { return manifest_.count(layer) != 0; }
  bool has(const std::string& layer, const std::string& name) const;
  const TensorEntry& entry(const std::string& layer, const std::string& name) const;
  std::span<const float> tensor(const std::string& layer, const std::string& name) const;
  std::span<float> mutable_tensor(const std::string& layer, const std::string& name);

  std::size_t parameter_count() const { return blob_.size(); }
  std::size_t byte_size() const { return blob_.size() * sizeof(float); }

  bool operator==(const WeightStore&) const = default;

 private:
  WeightManifest manifest_;
  std::vector<float> blob_;
};

/// Appends tensors in canonical (layer id, tensor name) order.
class WeightStoreBuilder {
 public:
  void add(const std::string& layer, const std::string& name, std::vector<std::int64_t> shape,
           std::vector<float> values);
  WeightStore build() &&;

 private:
  std::map<std::string, std::map<std::string, std::pair<std::vector<std::int64_t>, std::vector<float>>>> pending_;
};

/// Names and shapes a layer of this kind must carry in the store.
std::map<std::string, std::vector<std::int64_t>> expected_tensors(const LayerNode& node);

/// Checks the manifest against the graph attrs and blob bounds; returns one
/// message per problem.
std::vector<std::string> check_weights(const ModelGraph& g, const WeightStore& w);

}  // namespace prunegraph
