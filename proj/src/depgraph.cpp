#include "depvec/depgraph.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

namespace depvec::depgraph {

const char* edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::Control: return "CONTROL";
    case EdgeType::Data: return "DATA";
    case EdgeType::Call: return "CALL";
    case EdgeType::CallReturn: return "CALL_RETURN";
  }
  return "?";
}

std::vector<Edge> MethodGraph::logical_edges() const {
  std::vector<Edge> out;
  for (const auto& e : edges)
    if (!e.reversed) out.push_back(e);
  return out;
}

std::vector<Edge> ProgramGraph::logical_edges() const {
  std::vector<Edge> out;
  for (const auto& e : edges)
    if (!e.reversed) out.push_back(e);
  return out;
}

std::vector<std::vector<std::int64_t>> build_cfg(const mir::Method& m) {
  const std::int64_t n = static_cast<std::int64_t>(m.instructions.size());
  std::vector<std::vector<std::int64_t>> succ(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const mir::Instruction& ins = m.instructions[i];
    switch (ins.kind) {
      case mir::Kind::Return:
        break;
      case mir::Kind::Jump:
        succ[i].push_back(m.labels.at(ins.jump_target));
        break;
      case mir::Kind::Branch: {
        if (i + 1 < n) succ[i].push_back(i + 1);
        const std::int64_t target = m.labels.at(ins.jump_target);
        if (succ[i].empty() || succ[i][0] != target) succ[i].push_back(target);
        break;
      }
      default:
        if (i + 1 < n) succ[i].push_back(i + 1);
        break;
    }
  }
  return succ;
}

namespace {

struct DefSites {
  // site ids: 0..k-1 over (variable, def position); position -1 = parameter
  std::vector<std::pair<std::string, std::int64_t>> sites;
  std::map<std::string, std::vector<std::size_t>> by_var;

  explicit DefSites(const mir::Method& m) {
    for (const auto& p : m.params) add(p, -1);
    for (const auto& ins : m.instructions)
      if (ins.def) add(*ins.def, ins.index);
  }

  void add(const std::string& var, std::int64_t pos) {
    by_var[var].push_back(sites.size());
    sites.push_back({var, pos});
  }
};

using Bits = std::vector<bool>;

Bits or_bits(const Bits& a, const Bits& b) {
  Bits r = a;
  for (std::size_t i = 0; i < r.size(); ++i) if (b[i]) r[i] = true;
  return r;
}

void collect_pairs(const mir::Method& m, const DefSites& ds,
                   const std::vector<Bits>& in, std::set<DefUse>& out) {
  for (const auto& ins : m.instructions) {
    std::set<std::string> used(ins.uses.begin(), ins.uses.end());
    for (const auto& v : used) {
      auto it = ds.by_var.find(v);
      if (it == ds.by_var.end()) continue;  // undefined var, diagnosed earlier
      for (auto site : it->second)
        if (in[ins.index][site])
          out.insert({ds.sites[site].second, ins.index});
    }
  }
}

}  // namespace

std::vector<DefUse> reaching_definitions(const mir::Method& m) {
  const std::int64_t n = static_cast<std::int64_t>(m.instructions.size());
  DefSites ds(m);
  const std::size_t k = ds.sites.size();
  auto succ = build_cfg(m);

  Bits entry_out(k, false);
  for (std::size_t s = 0; s < k; ++s)
    if (ds.sites[s].second == -1) entry_out[s] = true;

  std::vector<Bits> in(n, Bits(k, false)), out(n, Bits(k, false));
  in[0] = entry_out;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::int64_t i = 0; i < n; ++i) {
      Bits ni = i == 0 ? entry_out : Bits(k, false);
      for (std::int64_t p = 0; p < n; ++p)
        for (auto s : succ[p])
          if (s == i) ni = or_bits(ni, out[p]);
      Bits no = ni;
      const mir::Instruction& ins = m.instructions[i];
      if (ins.def) {
        for (auto site : ds.by_var.at(*ins.def)) no[site] = false;
        for (auto site : ds.by_var.at(*ins.def))
          if (ds.sites[site].second == ins.index) no[site] = true;
      }
      if (ni != in[i] || no != out[i]) {
        in[i] = std::move(ni);
        out[i] = std::move(no);
        changed = true;
      }
    }
  }

  std::set<DefUse> pairs;
  collect_pairs(m, ds, in, pairs);
  return {pairs.begin(), pairs.end()};
}

std::vector<DefUse> reaching_definitions_oracle(const mir::Method& m) {
  DefSites ds(m);
  const std::size_t k = ds.sites.size();
  auto succ = build_cfg(m);

  Bits start(k, false);
  for (std::size_t s = 0; s < k; ++s)
    if (ds.sites[s].second == -1) start[s] = true;

  // walk every (instruction, definition-state) pair once; equivalent to
  // enumerating all CFG paths because the state space is finite
  std::set<std::pair<std::int64_t, Bits>> seen;
  std::vector<std::pair<std::int64_t, Bits>> work = {{0, start}};
  // a definition also reaches uses along paths that no entry path covers
  // (code after a mid-method return), so each def site seeds its successors
  // with just itself live
  for (std::size_t s = 0; s < k; ++s) {
    const std::int64_t site = ds.sites[s].second;
    if (site < 0) continue;
    Bits lone(k, false);
    lone[s] = true;
    for (auto nx : succ[static_cast<std::size_t>(site)])
      work.push_back({nx, lone});
  }
  std::set<DefUse> pairs;
  while (!work.empty()) {
    auto [i, state] = work.back();
    work.pop_back();
    if (!seen.insert({i, state}).second) continue;
    const mir::Instruction& ins = m.instructions[i];
    std::set<std::string> used(ins.uses.begin(), ins.uses.end());
    for (const auto& v : used) {
      auto it = ds.by_var.find(v);
      if (it == ds.by_var.end()) continue;
      for (auto site : it->second)
        if (state[site]) pairs.insert({ds.sites[site].second, i});
    }
    Bits next = state;
    if (ins.def) {
      for (auto site : ds.by_var.at(*ins.def)) next[site] = false;
      for (auto site : ds.by_var.at(*ins.def))
        if (ds.sites[site].second == ins.index) next[site] = true;
    }
    for (auto s : succ[i]) work.push_back({s, next});
  }
  return {pairs.begin(), pairs.end()};
}

namespace {

void push_mirrored(std::vector<Edge>& edges, std::int64_t src, std::int64_t dst,
                   EdgeType type) {
  edges.push_back({src, dst, type, false});
  edges.push_back({dst, src, type, true});
}

void add_method_edges(std::vector<Edge>& edges, const mir::Method& m,
                      std::int64_t base, std::int64_t entry,
                      std::int64_t exit) {
  push_mirrored(edges, entry, base + 0, EdgeType::Control);
  auto succ = build_cfg(m);
  for (std::size_t i = 0; i < succ.size(); ++i)
    for (auto s : succ[i])
      if (static_cast<std::int64_t>(i) != s)  // self-loops stay out of E
        push_mirrored(edges, base + i, base + s, EdgeType::Control);
  for (const auto& ins : m.instructions)
    if (ins.kind == mir::Kind::Return)
      push_mirrored(edges, base + ins.index, exit, EdgeType::Control);
  for (const auto& du : reaching_definitions(m)) {
    const std::int64_t src = du.def == -1 ? entry : base + du.def;
    const std::int64_t dst = base + du.use;
    if (src != dst) push_mirrored(edges, src, dst, EdgeType::Data);
  }
}

Tensor method_features(const mir::Method& m, const lexical::LexModel& model) {
  const std::int64_t d = model.net.hidden * 2;
  std::vector<Tensor> rows;
  for (const auto& ins : m.instructions)
    rows.push_back(encode_instruction(
        model.net, lexical::tokenize_instruction(ins, model.vocab), model.E));
  rows.push_back(Tensor::zeros({1, d}));  // ENTRY
  rows.push_back(Tensor::zeros({1, d}));  // EXIT
  return concat(rows, 0);
}

void fill_kinds(const mir::Method& m,
                std::vector<std::optional<mir::Kind>>& kinds) {
  for (const auto& ins : m.instructions) kinds.push_back(ins.kind);
  kinds.push_back(std::nullopt);  // ENTRY
  kinds.push_back(std::nullopt);  // EXIT
}

}  // namespace

MethodGraph build_method_graph(const mir::Method& m) {
  MethodGraph g;
  g.method = m.name;
  g.n_instructions = static_cast<std::int64_t>(m.instructions.size());
  g.entry = g.n_instructions;
  g.exit = g.n_instructions + 1;
  fill_kinds(m, g.kinds);
  add_method_edges(g.edges, m, 0, g.entry, g.exit);
  return g;
}

MethodGraph build_method_graph(const mir::Method& m,
                               const lexical::LexModel& model) {
  MethodGraph g = build_method_graph(m);
  g.X = method_features(m, model);
  return g;
}

ProgramGraph build_program_graph(const mir::Program& p) {
  ProgramGraph g;
  std::int64_t off = 0;
  for (const auto& m : p.methods) {
    g.method_names.push_back(m.name);
    g.node_offset.push_back(off);
    const std::int64_t n = static_cast<std::int64_t>(m.instructions.size());
    g.entry_of.push_back(off + n);
    g.exit_of.push_back(off + n + 1);
    fill_kinds(m, g.kinds);
    for (std::int64_t i = 0; i < n + 2; ++i)
      g.method_of.push_back(
          static_cast<std::int64_t>(g.method_names.size()) - 1);
    add_method_edges(g.edges, m, off, off + n, off + n + 1);
    off += n + 2;
  }
  g.n_nodes = off;

  std::set<std::pair<std::int64_t, std::int64_t>> rel;
  for (std::size_t mi = 0; mi < p.methods.size(); ++mi) {
    for (const auto& ins : p.methods[mi].instructions) {
      if (ins.kind != mir::Kind::Call) continue;
      auto it = p.method_index.find(ins.callee);
      if (it == p.method_index.end()) continue;  // external callee
      const std::int64_t callee = it->second;
      const std::int64_t site = g.node_offset[mi] + ins.index;
      push_mirrored(g.edges, site, g.entry_of[callee], EdgeType::Call);
      push_mirrored(g.edges, g.exit_of[callee], site, EdgeType::CallReturn);
      rel.insert({static_cast<std::int64_t>(mi), callee});
    }
  }
  g.call_relation = {rel.begin(), rel.end()};
  return g;
}

ProgramGraph build_program_graph(const mir::Program& p,
                                 const lexical::LexModel& model) {
  ProgramGraph g = build_program_graph(p);
  std::vector<Tensor> parts;
  for (const auto& m : p.methods) parts.push_back(method_features(m, model));
  g.X = concat(parts, 0);
  return g;
}

namespace {

nlohmann::json edges_json(const std::vector<Edge>& edges) {
  std::vector<Edge> sorted = edges;
  std::sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
    if (a.src != b.src) return a.src < b.src;
    if (a.dst != b.dst) return a.dst < b.dst;
    if (a.type != b.type) return static_cast<int>(a.type) < static_cast<int>(b.type);
    return a.reversed < b.reversed;
  });
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : sorted)
    arr.push_back({{"src", e.src},
                   {"dst", e.dst},
                   {"type", static_cast<int>(e.type)},
                   {"reversed", e.reversed}});
  return arr;
}

nlohmann::json nodes_json(const std::vector<std::optional<mir::Kind>>& kinds,
                          std::int64_t entry) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    std::string kind;
    if (kinds[i])
      kind = mir::kind_name(*kinds[i]);
    else
      kind = static_cast<std::int64_t>(i) == entry ? "ENTRY" : "EXIT";
    arr.push_back({{"id", i}, {"kind", kind}});
  }
  return arr;
}

}  // namespace

std::string to_json(const MethodGraph& g) {
  nlohmann::json j;
  j["method"] = g.method;
  j["nodes"] = nodes_json(g.kinds, g.entry);
  j["edges"] = edges_json(g.edges);
  return j.dump(2);
}

std::string to_json(const ProgramGraph& g) {
  nlohmann::json j;
  j["methods"] = g.method_names;
  nlohmann::json nodes = nlohmann::json::array();
  for (std::int64_t i = 0; i < g.n_nodes; ++i) {
    std::string kind;
    if (g.kinds[i])
      kind = mir::kind_name(*g.kinds[i]);
    else {
      const std::int64_t m = g.method_of[i];
      kind = i == g.entry_of[m] ? "ENTRY" : "EXIT";
    }
    nodes.push_back({{"id", i}, {"kind", kind}, {"method", g.method_of[i]}});
  }
  j["nodes"] = nodes;
  j["edges"] = edges_json(g.edges);
  nlohmann::json rel = nlohmann::json::array();
  for (const auto& [a, b] : g.call_relation) rel.push_back({a, b});
  j["call_relation"] = rel;
  return j.dump(2);
}

}  // namespace depvec::depgraph
