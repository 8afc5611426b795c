#include "prunegraph/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "prunegraph/error.hpp"

namespace prunegraph {

using nlohmann::json;

namespace {

json port_to_json(const PortRef& p) { return json{{"node", p.node}, {"port", p.port}}; }

json spec_to_json(const TensorSpec& s) { return json(s.shape); }

json attrs_to_json(const LayerNode& n) {
  const auto& a = n.attrs;
  json j = json::object();
  switch (n.kind) {
    case LayerKind::Linear:
      j["in_dim"] = a.in_dim;
      j["out_dim"] = a.out_dim;
      break;
    case LayerKind::Conv2d:
      j["in_ch"] = a.in_ch;
      j["out_ch"] = a.out_ch;
      j["kernel"] = a.kernel;
      j["stride"] = a.stride;
      j["padding"] = a.padding;
      break;
    case LayerKind::BatchNorm:
      j["channels"] = a.channels;
      break;
    case LayerKind::Activation:
      j["activation"] = a.activation;
      break;
    case LayerKind::Concat:
    case LayerKind::Split:
      j["sizes"] = a.sizes;
      break;
    case LayerKind::Add:
      j["arity"] = a.arity;
      break;
    case LayerKind::Flatten:
    case LayerKind::Identity:
      break;
  }
  return j;
}

[[noreturn]] void schema_fail(const std::string& what) { throw Error(ErrorKind::Schema, what); }

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema_fail(where + ": missing field '" + key + "'");
  return obj.at(key);
}

std::int64_t int_attr(const json& attrs, const char* key, const std::string& where) {
  const auto& v = require(attrs, key, where);
  if (!v.is_number_integer()) schema_fail(where + ": attr '" + std::string(key) + "' must be an integer");
  const auto x = v.get<std::int64_t>();
  return x;
}

PortRef port_from_json(const json& j, const std::string& where) {
  PortRef p;
  p.node = require(j, "node", where).get<std::string>();
  p.port = require(j, "port", where).get<int>();
  return p;
}

TensorSpec spec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) schema_fail(where + ": shape must be an array");
  TensorSpec s;
  for (const auto& d : j) {
    if (!d.is_number_integer()) schema_fail(where + ": shape entries must be integers");
    s.shape.push_back(d.get<std::int64_t>());
  }
  return s;
}

LayerNode node_from_json(const json& j) {
  LayerNode n;
  n.id = require(j, "id", "node").get<std::string>();
  const std::string where = "node '" + n.id + "'";
  const auto kind_name = require(j, "kind", where).get<std::string>();
  auto kind = parse_layer_kind(kind_name);
  if (!kind) schema_fail(where + ": unknown kind '" + kind_name + "'");
  n.kind = *kind;
  n.component = require(j, "component", where).get<std::string>();
  const json attrs = j.value("attrs", json::object());
  auto& a = n.attrs;
  switch (n.kind) {
    case LayerKind::Linear:
      a.in_dim = int_attr(attrs, "in_dim", where);
      a.out_dim = int_attr(attrs, "out_dim", where);
      break;
    case LayerKind::Conv2d:
      a.in_ch = int_attr(attrs, "in_ch", where);
      a.out_ch = int_attr(attrs, "out_ch", where);
      a.kernel = int_attr(attrs, "kernel", where);
      a.stride = int_attr(attrs, "stride", where);
      a.padding = int_attr(attrs, "padding", where);
      break;
    case LayerKind::BatchNorm:
      a.channels = int_attr(attrs, "channels", where);
      break;
    case LayerKind::Activation:
      a.activation = require(attrs, "activation", where).get<std::string>();
      break;
    case LayerKind::Concat:
    case LayerKind::Split:
      a.sizes = require(attrs, "sizes", where).get<std::vector<std::int64_t>>();
      break;
    case LayerKind::Add:
      a.arity = int_attr(attrs, "arity", where);
      break;
    case LayerKind::Flatten:
    case LayerKind::Identity:
      break;
  }
  return n;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

void check_integrity(const ModelGraph& g) {
  std::set<std::string> ids;
  for (const auto& n : g.nodes) {
    if (!ids.insert(n.id).second) throw Error(ErrorKind::Integrity, "duplicate id '" + n.id + "'");
  }
  for (const auto& in : g.inputs) {
    if (!ids.insert(in.id).second) throw Error(ErrorKind::Integrity, "duplicate id '" + in.id + "'");
  }
  std::set<std::string> comps;
  for (const auto& c : g.components) {
    if (!comps.insert(c.id).second) throw Error(ErrorKind::Integrity, "duplicate component id '" + c.id + "'");
  }
  for (const auto& n : g.nodes) {
    if (!comps.count(n.component))
      throw Error(ErrorKind::Integrity, "node '" + n.id + "' references undeclared component '" + n.component + "'");
  }
  auto port_ok = [&](const PortRef& p, bool output) {
    if (output && g.find_input(p.node)) return p.port == 0;
    const auto* n = g.find_node(p.node);
    if (!n) return false;
    const auto count = output ? n->num_outputs() : n->num_inputs();
    return p.port >= 0 && static_cast<std::size_t>(p.port) < count;
  };
  for (const auto& e : g.edges) {
    if (!port_ok(e.src, true) || !port_ok(e.dst, false))
      throw Error(ErrorKind::Integrity, "dangling edge " + edge_id(e));
  }
  for (const auto& o : g.outputs) {
    if (!port_ok(o.src, true)) throw Error(ErrorKind::Integrity, "output '" + o.id + "' references a missing port");
  }
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

json graph_to_json(const ModelGraph& src) {
  ModelGraph g = src;
  g.canonicalize();
  json doc;
  doc["version"] = kGraphVersion;
  doc["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    doc["nodes"].push_back(
        {{"id", n.id}, {"kind", to_string(n.kind)}, {"component", n.component}, {"attrs", attrs_to_json(n)}});
  }
  doc["edges"] = json::array();
  for (const auto& e : g.edges) {
    doc["edges"].push_back({{"src", port_to_json(e.src)},
                            {"dst", port_to_json(e.dst)},
                            {"recurrent", e.recurrent},
                            {"conditional", e.conditional}});
  }
  doc["components"] = json::array();
  for (const auto& c : g.components) {
    json ins = json::array(), outs = json::array();
    for (const auto& p : c.declared_inputs) ins.push_back(port_to_json(p));
    for (const auto& p : c.declared_outputs) outs.push_back(port_to_json(p));
    doc["components"].push_back({{"id", c.id},
                                 {"inputs", ins},
                                 {"outputs", outs},
                                 {"prunable", c.prunable},
                                 {"importance_weight", c.importance_weight}});
  }
  doc["inputs"] = json::array();
  for (const auto& in : g.inputs) doc["inputs"].push_back({{"id", in.id}, {"shape", spec_to_json(in.spec)}});
  doc["outputs"] = json::array();
  for (const auto& o : g.outputs)
    doc["outputs"].push_back({{"id", o.id}, {"src", port_to_json(o.src)}, {"shape", spec_to_json(o.spec)}});
  return doc;
}

ModelGraph graph_from_json(const json& doc) {
  if (!doc.is_object()) schema_fail("graph document must be an object");
  const auto version = require(doc, "version", "graph");
  if (!version.is_number_integer() || version.get<int>() != kGraphVersion)
    schema_fail("unsupported graph version " + version.dump());
  ModelGraph g;
  try {
    for (const auto& j : require(doc, "nodes", "graph")) g.nodes.push_back(node_from_json(j));
    for (const auto& j : require(doc, "edges", "graph")) {
      Edge e;
      e.src = port_from_json(require(j, "src", "edge"), "edge src");
      e.dst = port_from_json(require(j, "dst", "edge"), "edge dst");
      e.recurrent = j.value("recurrent", false);
      e.conditional = j.value("conditional", false);
      g.edges.push_back(std::move(e));
    }
    for (const auto& j : require(doc, "components", "graph")) {
      Component c;
      c.id = require(j, "id", "component").get<std::string>();
      for (const auto& p : j.value("inputs", json::array())) c.declared_inputs.push_back(port_from_json(p, c.id));
      for (const auto& p : j.value("outputs", json::array())) c.declared_outputs.push_back(port_from_json(p, c.id));
      c.prunable = j.value("prunable", true);
      c.importance_weight = j.value("importance_weight", 1.0);
      if (c.importance_weight < 0) schema_fail("component '" + c.id + "': importance_weight must be nonnegative");
      g.components.push_back(std::move(c));
    }
    for (const auto& j : require(doc, "inputs", "graph")) {
      GraphInput in;
      in.id = require(j, "id", "input").get<std::string>();
      in.spec = spec_from_json(require(j, "shape", in.id), "input '" + in.id + "'");
      g.inputs.push_back(std::move(in));
    }
    for (const auto& j : require(doc, "outputs", "graph")) {
      GraphOutput o;
      o.id = require(j, "id", "output").get<std::string>();
      o.src = port_from_json(require(j, "src", o.id), "output '" + o.id + "'");
      o.spec = spec_from_json(require(j, "shape", o.id), "output '" + o.id + "'");
      g.outputs.push_back(std::move(o));
    }
  } catch (const json::exception& ex) {
    schema_fail(ex.what());
  }
  g.reindex();
  check_integrity(g);
  return g;
}

ModelGraph load_graph(const std::filesystem::path& path) {
  const auto text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorKind::Parse, path.string() + ": " + ex.what());
  }
  return graph_from_json(doc);
}

std::string serialize_graph(const ModelGraph& g) { return graph_to_json(g).dump(2) + "\n"; }

void save_graph(const ModelGraph& g, const std::filesystem::path& path) { write_file(path, serialize_graph(g)); }

json manifest_to_json(const WeightManifest& manifest) {
  json j = json::object();
  for (const auto& [layer, tensors] : manifest) {
    for (const auto& [name, e] : tensors) j[layer][name] = {{"offset", e.offset}, {"shape", e.shape}};
  }
  return j;
}

WeightManifest manifest_from_json(const json& doc) {
  WeightManifest m;
  try {
    for (const auto& [layer, tensors] : doc.items()) {
      for (const auto& [name, e] : tensors.items()) {
        m[layer][name] = TensorEntry{e.at("offset").get<std::uint64_t>(), e.at("shape").get<std::vector<std::int64_t>>()};
      }
    }
  } catch (const json::exception& ex) {
    schema_fail(std::string("weight manifest: ") + ex.what());
  }
  return m;
}

std::string serialize_weights(const WeightStore& w) {
  static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");
  const auto manifest = manifest_to_json(w.manifest()).dump();
  std::string out(kWeightMagic, sizeof(kWeightMagic));
  put_u64_le(out, manifest.size());
  out += manifest;
  const auto* bytes = reinterpret_cast<const char*>(w.blob().data());
  out.append(bytes, w.byte_size());
  return out;
}

WeightStore deserialize_weights(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightMagic, 8) != 0)
    throw Error(ErrorKind::Parse, "weight file lacks the PGWT0001 header");
  const auto len = get_u64_le(bytes, 8);
  if (16 + len > bytes.size()) throw Error(ErrorKind::TruncatedBlob, "weight manifest extends past end of file");
  json doc;
  try {
    doc = json::parse(bytes.substr(16, len));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorKind::Parse, std::string("weight manifest: ") + ex.what());
  }
  auto manifest = manifest_from_json(doc);
  const std::size_t blob_bytes = bytes.size() - 16 - len;
  if (blob_bytes % sizeof(float) != 0) throw Error(ErrorKind::TruncatedBlob, "blob is not a whole number of f32s");
  std::uint64_t needed = 0;
  for (const auto& [layer, tensors] : manifest) {
    for (const auto& [name, e] : tensors)
      needed = std::max<std::uint64_t>(needed, e.offset + static_cast<std::uint64_t>(e.numel()) * sizeof(float));
  }
  if (blob_bytes < needed)
    throw Error(ErrorKind::TruncatedBlob, "blob holds " + std::to_string(blob_bytes / 4) + " floats, manifest needs " +
                                              std::to_string(needed / 4));
  std::vector<float> blob(blob_bytes / sizeof(float));
  std::memcpy(blob.data(), bytes.data() + 16 + len, blob_bytes);
  return WeightStore(std::move(manifest), std::move(blob));
}

WeightStore read_weight_file(const std::filesystem::path& path) { return deserialize_weights(read_file(path)); }

WeightStore load_weights(const ModelGraph& g, const std::filesystem::path& path) {
  auto w = read_weight_file(path);
  for (const auto& node : g.nodes) {
    for (const auto& [name, shape] : expected_tensors(node)) {
      if (!w.has(node.id, name))
        throw Error(ErrorKind::MissingWeights, "layer '" + node.id + "' is missing tensor '" + name + "'");
      const auto& e = w.entry(node.id, name);
      if (e.shape != shape)
        throw Error(ErrorKind::ShapeMismatch, "layer '" + node.id + "' tensor '" + name + "' has shape " +
                                                  to_string(TensorSpec{e.shape}) + ", expected " +
                                                  to_string(TensorSpec{shape}));
    }
  }
  const auto problems = check_weights(g, w);
  if (!problems.empty()) throw Error(ErrorKind::Integrity, problems.front());
  return w;
}

void save_weights(const WeightStore& w, const std::filesystem::path& path) { write_file(path, serialize_weights(w)); }

}  // namespace prunegraph
