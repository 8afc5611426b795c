#include "prunegraph/weights.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "prunegraph/error.hpp"

namespace prunegraph {

std::int64_t TensorEntry::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

WeightStore::WeightStore(WeightManifest manifest, std::vector<float> blob)
    : manifest_(std::move(manifest)), blob_(std::move(blob)) {}

bool WeightStore::has(const std::string& layer, const std::string& name) const {
  auto it = manifest_.find(layer);
  return it != manifest_.end() && it->second.count(name) != 0;
}

const TensorEntry& WeightStore::entry(const std::string& layer, const std::string& name) const {
  auto it = manifest_.find(layer);
  if (it == manifest_.end()) throw Error(ErrorKind::MissingWeights, "no weights for layer '" + layer + "'");
  auto jt = it->second.find(name);
  if (jt == it->second.end())
    throw Error(ErrorKind::MissingWeights, "layer '" + layer + "' has no tensor '" + name + "'");
  return jt->second;
}

std::span<const float> WeightStore::tensor(const std::string& layer, const std::string& name) const {
  const auto& e = entry(layer, name);
  const std::size_t first = e.offset / sizeof(float);
  const std::size_t count = static_cast<std::size_t>(e.numel());
  if (first + count > blob_.size())
    throw Error(ErrorKind::TruncatedBlob, "tensor " + layer + "." + name + " exceeds blob");
  return {blob_.data() + first, count};
}

std::span<float> WeightStore::mutable_tensor(const std::string& layer, const std::string& name) {
  auto view = std::as_const(*this).tensor(layer, name);
  return {blob_.data() + (view.data() - blob_.data()), view.size()};
}

void WeightStoreBuilder::add(const std::string& layer, const std::string& name, std::vector<std::int64_t> shape,
                             std::vector<float> values) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
  if (n != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorKind::ShapeMismatch, layer + "." + name + ": value count does not match shape");
  pending_[layer][name] = {std::move(shape), std::move(values)};
}

WeightStore WeightStoreBuilder::build() && {
  WeightManifest manifest;
  std::vector<float> blob;
  for (auto& [layer, tensors] : pending_) {
    for (auto& [name, item] : tensors) {
      manifest[layer][name] = TensorEntry{blob.size() * sizeof(float), item.first};
      blob.insert(blob.end(), item.second.begin(), item.second.end());
    }
  }
  return WeightStore(std::move(manifest), std::move(blob));
}

std::map<std::string, std::vector<std::int64_t>> expected_tensors(const LayerNode& node) {
  const auto& a = node.attrs;
  switch (node.kind) {
    case LayerKind::Linear:
      return {{"weight", {a.out_dim, a.in_dim}}, {"bias", {a.out_dim}}};
    case LayerKind::Conv2d:
      return {{"weight", {a.out_ch, a.in_ch, a.kernel, a.kernel}}, {"bias", {a.out_ch}}};
    case LayerKind::BatchNorm:
      return {{"gamma", {a.channels}},
              {"beta", {a.channels}},
              {"running_mean", {a.channels}},
              {"running_var", {a.channels}}};
    default:
      return {};
  }
}

std::vector<std::string> check_weights(const ModelGraph& g, const WeightStore& w) {
  std::vector<std::string> problems;
  for (const auto& node : g.nodes) {
    const auto expected = expected_tensors(node);
    if (expected.empty()) {
      if (w.has_layer(node.id)) problems.push_back("layer '" + node.id + "' is parameter-free but has weights");
      continue;
    }
    for (const auto& [name, shape] : expected) {
      if (!w.has(node.id, name)) {
        problems.push_back("layer '" + node.id + "' is missing tensor '" + name + "'");
        continue;
      }
      const auto& e = w.entry(node.id, name);
      if (e.shape != shape) {
        TensorSpec got{e.shape}, want{shape};
        problems.push_back("layer '" + node.id + "' tensor '" + name + "' has shape " + to_string(got) +
                           ", expected " + to_string(want));
      }
    }
  }
  for (const auto& [layer, tensors] : w.manifest()) {
    if (!g.find_node(layer)) problems.push_back("weights reference unknown layer '" + layer + "'");
    (void)tensors;
  }

  // Offsets must tile the blob exactly: no overlap (shared weights), no gaps.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& [layer, tensors] : w.manifest()) {
    for (const auto& [name, e] : tensors) {
      if (e.offset % sizeof(float) != 0) problems.push_back(layer + "." + name + " offset is not f32-aligned");
      spans.emplace_back(e.offset, e.offset + static_cast<std::uint64_t>(e.numel()) * sizeof(float));
    }
  }
  std::sort(spans.begin(), spans.end());
  std::uint64_t cursor = 0;
  for (const auto& [begin, end] : spans) {
    if (begin < cursor) problems.push_back("manifest tensors overlap (shared weights are unsupported)");
    else if (begin > cursor) problems.push_back("manifest leaves a gap in the blob");
    cursor = std::max(cursor, end);
  }
  if (cursor != w.byte_size()) problems.push_back("blob length does not equal the sum of tensor sizes");
  return problems;
}

}  // namespace prunegraph
