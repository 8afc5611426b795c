#pragma once

#include <filesystem>
#include <string>

#include "prunegraph/ir.hpp"
#include "prunegraph/weights.hpp"
#include "json.hpp"

namespace prunegraph {

inline constexpr char kWeightMagic[8] = {'P', 'G', 'W', 'T', '0', '0', '0', '1'};
inline constexpr int kGraphVersion = 1;

nlohmann::json graph_to_json(const ModelGraph& g);
/// Parses and checks integrity (duplicate ids, dangling references); does not
/// run shape validation.
ModelGraph graph_from_json(const nlohmann::json& doc);

ModelGraph load_graph(const std::filesystem::path& path);
/// Canonical form: sorted keys, arrays ordered by id, two-space indent.
void save_graph(const ModelGraph& g, const std::filesystem::path& path);
std::string serialize_graph(const ModelGraph& g);

nlohmann::json manifest_to_json(const WeightManifest& manifest);
WeightManifest manifest_from_json(const nlohmann::json& doc);

/// Reads a weight file and checks it against the graph's attrs.
WeightStore load_weights(const ModelGraph& g, const std::filesystem::path& path);
/// Reads a weight file without graph checks.
WeightStore read_weight_file(const std::filesystem::path& path);
void save_weights(const WeightStore& w, const std::filesystem::path& path);
std::string serialize_weights(const WeightStore& w);
WeightStore deserialize_weights(const std::string& bytes);

}  // namespace prunegraph
