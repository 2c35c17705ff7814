#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "depvec/depgraph.hpp"
#include "depvec/lexical.hpp"
#include "depvec/mir.hpp"

using namespace depvec;
using namespace depvec::depgraph;

namespace {

mir::Method method_of(const std::string& src) {
  return mir::parse_program(src).methods[0];
}

bool has_edge(const std::vector<Edge>& edges, std::int64_t src,
              std::int64_t dst, EdgeType t) {
  for (const auto& e : edges)
    if (!e.reversed && e.src == src && e.dst == dst && e.type == t) return true;
  return false;
}

lexical::LexModel tiny_model(std::uint64_t seed) {
  Rng rng = Rng::seeded(seed);
  lexical::LexModel m;
  m.vocab = lexical::train_bpe(
      {"a b c d e f g h i j k l m n o p q r s t u v w x y z 0 1 2 3 4 5 "
       "= + - * / % < > ( ) , if goto return call"},
      64);
  m.E = Tensor::param({m.vocab.size(), 6}, rng, -0.5, 0.5);
  m.net = lexical::BiLstm::init(6, 4, rng);
  return m;
}

}  // namespace

TEST_CASE("cfg construction") {
  SUBCASE("straight line") {
    auto succ = build_cfg(method_of("method f(){ a = 1; b = 2; return b; }"));
    REQUIRE(succ.size() == 3);
    CHECK(succ[0] == std::vector<std::int64_t>{1});
    CHECK(succ[1] == std::vector<std::int64_t>{2});
    CHECK(succ[2].empty());
  }
  SUBCASE("branch has fall-through then target") {
    auto succ = build_cfg(method_of(
        "method min(a,b){ if a < b goto L1; r = b; return r; L1: r = a; "
        "return r; }"));
    CHECK(succ[0] == std::vector<std::int64_t>{1, 3});
    CHECK(succ[2].empty());
    CHECK(succ[4].empty());
  }
  SUBCASE("jump to own label loops") {
    auto succ = build_cfg(method_of("method f(){ L: goto L; }"));
    CHECK(succ[0] == std::vector<std::int64_t>{0});
  }
}

TEST_CASE("reaching definitions") {
  SUBCASE("single def reaches its use") {
    auto du = reaching_definitions(
        method_of("method f(){ r = 1; s = r; return s; }"));
    CHECK(du == std::vector<DefUse>{{0, 1}, {1, 2}});
  }
  SUBCASE("redefinition kills the first def") {
    auto du = reaching_definitions(
        method_of("method f(){ r = 1; r = 2; s = r; return s; }"));
    CHECK(du == std::vector<DefUse>{{1, 2}, {2, 3}});
  }
  SUBCASE("loop lets both entry def and own def reach") {
    auto du = reaching_definitions(
        method_of("method f(i){ L: i = i + 1; goto L; }"));
    CHECK(du == std::vector<DefUse>{{-1, 0}, {0, 0}});
  }
  SUBCASE("worklist matches the exhaustive oracle") {
    const char* sources[] = {
        "method f(a,b){ if a < b goto L1; r = b; return r; L1: r = a; "
        "return r; }",
        "method g(n){ i = 0; s = 0; L: if i > n goto E; s = s + i; "
        "i = i + 1; goto L; E: return s; }",
        "method h(x){ x = x + 1; x = x * 2; return x; }",
        "method k(a){ L: a = a - 1; if a > 0 goto L; return a; }",
        "method m(p,q){ t = p; p = q; q = t; r = p + q; return r; }",
        "method n(v){ if v < 0 goto N; goto P; N: v = 0 - v; P: return v; }",
    };
    for (const char* src : sources) {
      CAPTURE(src);
      mir::Method m = method_of(src);
      CHECK(reaching_definitions(m) == reaching_definitions_oracle(m));
    }
  }
}

TEST_CASE("method graph construction") {
  SUBCASE("identity method") {
    MethodGraph g = build_method_graph(method_of("method id(x){ return x; }"));
    CHECK(g.nodes() == 3);
    CHECK(g.entry == 1);
    CHECK(g.exit == 2);
    auto logical = g.logical_edges();
    REQUIRE(logical.size() == 3);
    CHECK(has_edge(g.edges, g.entry, 0, EdgeType::Control));
    CHECK(has_edge(g.edges, 0, g.exit, EdgeType::Control));
    CHECK(has_edge(g.edges, g.entry, 0, EdgeType::Data));
    CHECK(g.edges.size() == 6);  // each logical edge carries a mirror
    for (std::size_t i = 0; i < g.edges.size(); i += 2) {
      CHECK(g.edges[i].src == g.edges[i + 1].dst);
      CHECK(g.edges[i].dst == g.edges[i + 1].src);
      CHECK(g.edges[i].type == g.edges[i + 1].type);
      CHECK(!g.edges[i].reversed);
      CHECK(g.edges[i + 1].reversed);
    }
  }
  SUBCASE("no variable reuse means no data edges between instructions") {
    MethodGraph g = build_method_graph(
        method_of("method f(a,b){ x = a; y = b; return 0; }"));
    for (const auto& e : g.logical_edges())
      if (e.type == EdgeType::Data) CHECK(e.src == g.entry);
  }
  SUBCASE("edge count arithmetic") {
    mir::Method m = method_of(
        "method min(a,b){ if a < b goto L1; r = b; return r; L1: r = a; "
        "return r; }");
    MethodGraph g = build_method_graph(m);
    auto succ = build_cfg(m);
    std::size_t cfg_edges = 0;
    for (const auto& s : succ) cfg_edges += s.size();
    const std::size_t def_use = reaching_definitions(m).size();
    std::size_t returns = 0;
    for (const auto& ins : m.instructions)
      if (ins.kind == mir::Kind::Return) ++returns;
    CHECK(g.logical_edges().size() == cfg_edges + def_use + returns + 1);
    CHECK(cfg_edges == 4);
    // (-1,0) a and b, (-1,1) b, (1,2) r, (-1,3) a, (3,4) r
    CHECK(def_use == 5);
    CHECK(returns == 2);
    CHECK(has_edge(g.edges, 1, 2, EdgeType::Data));
    CHECK(has_edge(g.edges, 3, 4, EdgeType::Data));
    CHECK(has_edge(g.edges, g.entry, 1, EdgeType::Data));
  }
  SUBCASE("no self loops even with tight loops") {
    MethodGraph g = build_method_graph(
        method_of("method f(i){ L: i = i + 1; goto L; }"));
    for (const auto& e : g.edges) CHECK(e.src != e.dst);
  }
}

TEST_CASE("program graph construction") {
  SUBCASE("single resolved call") {
    mir::Program p = mir::parse_program(
        "method callee(v){ return v; } "
        "method caller(x){ r = call callee(x); return r; }");
    ProgramGraph g = build_program_graph(p);
    std::size_t calls = 0, rets = 0;
    for (const auto& e : g.logical_edges()) {
      if (e.type == EdgeType::Call) ++calls;
      if (e.type == EdgeType::CallReturn) ++rets;
    }
    CHECK(calls == 1);
    CHECK(rets == 1);
    // caller is method 1; call site is its instruction 0 at global offset
    const std::int64_t site = g.node_offset[1] + 0;
    CHECK(has_edge(g.edges, site, g.entry_of[0], EdgeType::Call));
    CHECK(has_edge(g.edges, g.exit_of[0], site, EdgeType::CallReturn));
    CHECK(g.call_relation ==
          std::vector<std::pair<std::int64_t, std::int64_t>>{{1, 0}});
  }
  SUBCASE("recursion points at own entry") {
    mir::Program p = mir::parse_program(
        "method f(n){ if n < 1 goto B; r = call f(n); return r; B: return n; }");
    ProgramGraph g = build_program_graph(p);
    CHECK(has_edge(g.edges, 1, g.entry_of[0], EdgeType::Call));
    CHECK(g.call_relation ==
          std::vector<std::pair<std::int64_t, std::int64_t>>{{0, 0}});
  }
  SUBCASE("external calls add no inter-method edges") {
    mir::Program p = mir::parse_program(
        "method f(){ call printInt(1); return 0; }");
    ProgramGraph g = build_program_graph(p);
    for (const auto& e : g.edges) {
      CHECK(e.type != EdgeType::Call);
      CHECK(e.type != EdgeType::CallReturn);
    }
    CHECK(g.call_relation.empty());
  }
  SUBCASE("node bookkeeping") {
    mir::Program p = mir::parse_program(
        "method a(){ return 1; } method b(x){ y = x; return y; }");
    ProgramGraph g = build_program_graph(p);
    CHECK(g.n_nodes == 3 + 4);
    CHECK(g.node_offset == std::vector<std::int64_t>{0, 3});
    CHECK(g.entry_of == std::vector<std::int64_t>{1, 5});
    CHECK(g.exit_of == std::vector<std::int64_t>{2, 6});
    CHECK(g.method_of == std::vector<std::int64_t>{0, 0, 0, 1, 1, 1, 1});
    CHECK(g.kinds[0] == mir::Kind::Return);
    CHECK(g.kinds[1] == std::nullopt);
  }
}

TEST_CASE("construction is deterministic") {
  mir::Program p = mir::parse_program(
      "method gcd(a,b){ L0: if b == 0 goto L1; t = b; b = a % b; a = t; "
      "goto L0; L1: return a; } "
      "method main(x,y){ g = call gcd(x,y); return g; }");
  ProgramGraph g1 = build_program_graph(p);
  ProgramGraph g2 = build_program_graph(p);
  CHECK(g1.edges == g2.edges);
  CHECK(g1.kinds == g2.kinds);
}

TEST_CASE("renaming preserves structure but not features") {
  const char* original =
      "method sum(n){ i = 0; s = 0; L: if i > n goto E; s = s + i; "
      "i = i + 1; goto L; E: return s; } "
      "method main(k){ r = call sum(k); return r; }";
  const char* renamed =
      "method total(count){ idx = 0; acc = 0; L: if idx > count goto E; "
      "acc = acc + idx; idx = idx + 1; goto L; E: return acc; } "
      "method entry(limit){ res = call total(limit); return res; }";
  mir::Program p1 = mir::parse_program(original);
  mir::Program p2 = mir::parse_program(renamed);

  ProgramGraph g1 = build_program_graph(p1);
  ProgramGraph g2 = build_program_graph(p2);
  CHECK(g1.edges == g2.edges);
  CHECK(g1.kinds == g2.kinds);
  CHECK(g1.n_nodes == g2.n_nodes);

  lexical::LexModel model = tiny_model(3);
  ProgramGraph f1 = build_program_graph(p1, model);
  ProgramGraph f2 = build_program_graph(p2, model);
  REQUIRE(f1.X.shape() == f2.X.shape());
  bool any_diff = false;
  for (std::int64_t i = 0; i < f1.X.size(); ++i)
    if (f1.X.data()[i] != f2.X.data()[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("feature rows") {
  lexical::LexModel model = tiny_model(5);
  mir::Method m = method_of("method f(a){ b = a + 1; return b; }");
  MethodGraph g = build_method_graph(m, model);
  REQUIRE(g.X.defined());
  CHECK(g.X.shape() == Shape{4, 8});
  // pseudo-node rows are zero
  for (std::int64_t j = 0; j < 8; ++j) {
    CHECK(g.X.data()[g.entry * 8 + j] == 0.0);
    CHECK(g.X.data()[g.exit * 8 + j] == 0.0);
  }
  // instruction rows equal their standalone encodings
  Tensor row0 = encode_instruction(
      model.net, lexical::tokenize_instruction(m.instructions[0], model.vocab),
      model.E);
  for (std::int64_t j = 0; j < 8; ++j)
    CHECK(g.X.data()[j] == row0.data()[j]);
}

TEST_CASE("json export") {
  mir::Program p = mir::parse_program(
      "method callee(v){ return v; } "
      "method caller(x){ r = call callee(x); return r; }");
  ProgramGraph g = build_program_graph(p);
  nlohmann::json j = nlohmann::json::parse(to_json(g));
  REQUIRE(j.contains("nodes"));
  REQUIRE(j.contains("edges"));
  CHECK(j["nodes"].size() == static_cast<std::size_t>(g.n_nodes));
  CHECK(j["edges"].size() == g.edges.size());
  // stable (src, dst, type) ordering
  for (std::size_t i = 1; i < j["edges"].size(); ++i) {
    auto a = std::tuple<std::int64_t, std::int64_t, int, bool>(
        j["edges"][i - 1]["src"], j["edges"][i - 1]["dst"],
        j["edges"][i - 1]["type"], j["edges"][i - 1]["reversed"]);
    auto b = std::tuple<std::int64_t, std::int64_t, int, bool>(
        j["edges"][i]["src"], j["edges"][i]["dst"], j["edges"][i]["type"],
        j["edges"][i]["reversed"]);
    CHECK(a <= b);
  }
  CHECK(j["nodes"][0]["kind"] == "RETURN");

  MethodGraph mg = build_method_graph(p.methods[0]);
  nlohmann::json mj = nlohmann::json::parse(to_json(mg));
  CHECK(mj["method"] == "callee");
  CHECK(mj["nodes"][1]["kind"] == "ENTRY");
  CHECK(mj["nodes"][2]["kind"] == "EXIT");
}
