#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depvec/lexical.hpp"
#include "depvec/mir.hpp"
#include "depvec/tensor.hpp"

namespace depvec::depgraph {

enum class EdgeType {
  Control = 0,
  Data = 1,
  Call = 2,
  CallReturn = 3,
};
constexpr int kEdgeTypeCount = 4;
const char* edge_type_name(EdgeType t);

struct Edge {
  std::int64_t src = 0;
  std::int64_t dst = 0;
  EdgeType type = EdgeType::Control;
  bool reversed = false;  // mirrored copy used for message passing

  friend bool operator==(const Edge&, const Edge&) = default;
};

// nodes: instructions 0..n-1, then ENTRY = n, EXIT = n+1
struct MethodGraph {
  std::string method;
  std::int64_t n_instructions = 0;
  std::int64_t entry = 0;
  std::int64_t exit = 0;
  std::vector<Edge> edges;  // logical edges each followed by their mirror
  std::vector<std::optional<mir::Kind>> kinds;  // per node; pseudo -> nullopt
  Tensor X;  // [nodes, feat]; ENTRY/EXIT rows are zero; undefined if not built

  std::int64_t nodes() const { return n_instructions + 2; }
  std::vector<Edge> logical_edges() const;
};

struct ProgramGraph {
  std::vector<std::string> method_names;
  std::int64_t n_nodes = 0;
  std::vector<Edge> edges;
  std::vector<std::optional<mir::Kind>> kinds;
  std::vector<std::int64_t> node_offset;  // method -> first global node id
  std::vector<std::int64_t> entry_of, exit_of;
  std::vector<std::int64_t> method_of;  // node -> method slot
  // call relation as sorted unique (caller, callee) method slot pairs
  std::vector<std::pair<std::int64_t, std::int64_t>> call_relation;
  Tensor X;

  std::vector<Edge> logical_edges() const;
};

// successor indices per instruction; BRANCH lists fall-through before target
std::vector<std::vector<std::int64_t>> build_cfg(const mir::Method& m);

// def site -1 stands for a parameter definition at ENTRY
struct DefUse {
  std::int64_t def = 0;
  std::int64_t use = 0;

  friend auto operator<=>(const DefUse&, const DefUse&) = default;
};

// GEN/KILL worklist fixed point; result sorted and deduplicated
std::vector<DefUse> reaching_definitions(const mir::Method& m);

// exhaustive walk over (position, live-definition-state) pairs; exponential
// in spirit but memoized, usable on small methods as an independent check
std::vector<DefUse> reaching_definitions_oracle(const mir::Method& m);

MethodGraph build_method_graph(const mir::Method& m);
MethodGraph build_method_graph(const mir::Method& m,
                               const lexical::LexModel& model);

ProgramGraph build_program_graph(const mir::Program& p);
ProgramGraph build_program_graph(const mir::Program& p,
                                 const lexical::LexModel& model);

std::string to_json(const MethodGraph& g);
std::string to_json(const ProgramGraph& g);

}  // namespace depvec::depgraph
