#pragma once

// Dependency relation over prunable dimension slots and extraction of pruning
// groups by closure.
//
// Atoms are (slot, index) pairs. Edges couple atoms through index maps; a
// flatten couples one channel to an H*W block of columns, so closure runs on
// atoms rather than whole slots.
//
// Vanilla mode closes over every edge; index classes that share a slot form one
// group. Component-aware mode keeps only
// intra-component edges inside each component; every producer port that feeds
// another component founds a cross group holding its interface slots, the
// consumer interface slots it feeds, and their intra-layer coupled neighbours.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "prunegraph/ir.hpp"
#include "prunegraph/trace.hpp"
#include "prunegraph/validate.hpp"

namespace prunegraph {

enum class Side { Input, Output };
enum class Scheme { PruneRows, PruneCols, Coupled, None };
enum class Origin { D1, D2, DI, DX };
enum class Mode { Vanilla, ComponentAware };

const char* to_string(Side side);
const char* to_string(Scheme scheme);
const char* to_string(Origin origin);
const char* to_string(Mode mode);
std::optional<Mode> parse_mode(const std::string& name);

struct DimSlot {
  std::string layer;
  Side side = Side::Input;
  int port = 0;
  std::int64_t width = 0;
  Scheme scheme = Scheme::None;
  std::string component;
  /// Fed by a graph input or read as a graph output; its width is fixed.
  bool pinned = false;
};

struct IndexMap {
  enum class Kind { Identity, ConcatOffset, SplitOffset, FlattenExpand };
  Kind kind = Kind::Identity;
  std::int64_t offset = 0;
  std::int64_t h = 1, w = 1;

  /// Half-open range of to-side indices coupled to from-side index i.
  std::pair<std::int64_t, std::int64_t> image(std::int64_t i) const;
  std::string describe() const;
};

struct DependencyEdge {
  std::size_t from = 0;  // slot indices
  std::size_t to = 0;
  Origin base = Origin::D1;  // D1 or D2: what produced the coupling
  Origin origin = Origin::D1;  // D1/D2 in vanilla mode, DI/DX in component-aware mode
  IndexMap map;
  bool recurrent = false;
};

class SlotTable {
 public:
  std::vector<DimSlot> slots;

  std::optional<std::size_t> find(const std::string& layer, Side side, int port) const;
  std::size_t at(const std::string& layer, Side side, int port) const;
  void index();

 private:
  std::map<std::tuple<std::string, int, int>, std::size_t> lookup_;
};

/// One slot per (layer, side, port) with widths from shape inference.
SlotTable build_slots(const ModelGraph& g);

/// One d1 edge per graph edge between layers (graph-input edges carry no
/// coupling). Throws Error(Unmappable) when the two widths differ.
std::vector<DependencyEdge> build_dataflow(const ModelGraph& g, const SlotTable& slots);

/// In-to-out coupling for elementwise and routing kinds; none for linear and
/// conv2d, whose two sides prune independently.
std::vector<DependencyEdge> intra_layer_coupling(const LayerNode& node, const SlotTable& slots);

struct DependencyGraph {
  Mode mode = Mode::Vanilla;
  std::vector<DimSlot> slots;
  std::vector<DependencyEdge> edges;
  std::vector<std::int64_t> atom_offset;  // first atom of each slot; back() = atom count
  std::vector<std::string> warnings;

  std::size_t atom_count() const { return static_cast<std::size_t>(atom_offset.back()); }
  std::size_t atom(std::size_t slot, std::int64_t index) const {
    return static_cast<std::size_t>(atom_offset[slot] + index);
  }
  /// (slot, index) of an atom.
  std::pair<std::size_t, std::int64_t> locate(std::size_t atom) const;
};

/// `interfaces` is required in component-aware mode and ignored otherwise.
DependencyGraph build_dependency(const ModelGraph& g, const InterfaceMap* interfaces, Mode mode);

enum class GroupKind { Intra, Spanning, Cross };
const char* to_string(GroupKind kind);

struct PruningGroup {
  std::size_t id = 0;
  GroupKind kind = GroupKind::Intra;
  std::string component;             // intra groups
  std::string source;                // cross groups: producing component
  std::vector<std::string> targets;  // cross groups: consuming components
  std::vector<std::size_t> slots;    // sorted slot indices
  std::vector<std::string> layers;   // sorted distinct layer ids
  std::vector<std::string> components;
  /// Coupled index classes; each is a sorted atom list. Ordered by first atom.
  std::vector<std::vector<std::size_t>> classes;
  bool cyclic = false;  // closed through a recurrent edge

  /// Operations per group: distinct layers touched.
  std::size_t size() const { return layers.size(); }
  std::size_t width() const { return classes.size(); }
};

/// The atom-level links closure runs over, after the mode's domain split.
struct ClosureInput {
  std::size_t atom_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> links;
  std::vector<bool> recurrent;  // per link
  /// Per atom: -1 for slot-grouped atoms, k >= 0 for cross founder k.
  std::vector<int> domain;
  std::vector<PortRef> founders;
};

ClosureInput closure_input(const DependencyGraph& d);

/// Assembles groups from atom classes (shared by the union-find path and the
/// oracle so that only the closure step differs).
std::vector<PruningGroup> assemble_groups(const DependencyGraph& d, const ClosureInput& in,
                                          std::vector<std::vector<std::size_t>> classes);

std::vector<PruningGroup> extract_groups(const DependencyGraph& d);

/// Cubic boolean transitive closure; test oracle for extract_groups.
inline constexpr std::size_t kOracleAtomCap = 10000;
std::vector<PruningGroup> closure_oracle(const DependencyGraph& d, bool parallel = true);

/// Closure over every edge of `d`, ignoring the mode's domain split. These are
/// the index sets that must be removed together to keep shapes consistent.
struct PhysicalClasses {
  std::vector<std::vector<std::size_t>> classes;
  std::vector<std::size_t> class_of;  // per atom
};
PhysicalClasses physical_classes(const DependencyGraph& d);

struct GroupStats {
  std::size_t groups = 0;
  double mean_size = 0.0;
  std::size_t cross = 0;
  std::size_t index_classes = 0;
};
GroupStats group_stats(const std::vector<PruningGroup>& groups);

nlohmann::json groups_to_json(const DependencyGraph& d, const std::vector<PruningGroup>& groups);

/// Same partition of atoms into groups and of atoms into classes.
bool same_partition(const std::vector<PruningGroup>& a, const std::vector<PruningGroup>& b);

}  // namespace prunegraph
