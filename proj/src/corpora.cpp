#include "depvec/corpora.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "depvec/depgraph.hpp"
#include "depvec/rng.hpp"

namespace depvec::corpora {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(i))]);
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.uniform_int(v.size()))];
}

// identifier pools; the probing token families get exclusive pools so that
// family membership is carried by tokens alone
const std::vector<std::string> kVars = {
    "total", "step",  "limit", "count", "value", "left",  "right",
    "item",  "size",  "base",  "rest",  "high",  "low",   "mid",
    "gap",   "rate",  "mark",  "span",  "order", "score"};
const std::vector<std::string> kMethods = {"run",    "calc",  "apply", "work",
                                           "solve",  "handle", "reduce",
                                           "build",  "check",  "merge"};
const std::vector<std::string> kLabels = {"again", "done", "more",
                                          "hop",   "back", "ahead"};
const std::vector<std::string> kTemps = {"aux", "spare", "hold", "keep",
                                         "stash"};

struct FamilyPool {
  std::vector<std::string> vars, methods, labels;
};
const std::vector<FamilyPool> kFamilies = {
    {{"alpha", "amber", "anchor", "arrow", "atlas", "audit", "apex", "axis",
      "acre", "aisle"},
     {"adapt", "align", "absorb"},
     {"aloft", "aside", "anew"}},
    {{"bravo", "basin", "beacon", "border", "bucket", "burst", "bolt", "bloom",
      "brick", "bay"},
     {"blend", "boost", "brace"},
     {"below", "beyond", "beside"}},
    {{"cedar", "chart", "civic", "cobalt", "corner", "crest", "cage", "calm",
      "cart", "cove"},
     {"carve", "clamp", "coast"},
     {"close", "cross", "circa"}},
    {{"delta", "dial", "dome", "drift", "dune", "dusk", "dart", "dawn", "deck",
      "disk"},
     {"draft", "drain", "dwell"},
     {"during", "deep", "direct"}}};

const std::vector<std::string> kVerbs = {"compute", "find", "count", "scale",
                                         "track"};
const std::vector<std::string> kNouns = {"sum", "product", "max", "delta",
                                         "ratio"};

std::string materialize(
    std::string text,
    const std::vector<std::pair<std::string, std::string>>& map) {
  for (const auto& [ph, name] : map) {
    std::size_t pos = 0;
    while ((pos = text.find(ph, pos)) != std::string::npos) {
      text.replace(pos, ph.size(), name);
      pos += name.size();
    }
  }
  return text;
}

// maps every $v<d>/$m<d>/$L<d> placeholder in the template to a distinct name
// drawn from the pools
std::vector<std::pair<std::string, std::string>> assign_names(
    const std::string& tpl, const std::vector<std::string>& vars,
    const std::vector<std::string>& methods,
    const std::vector<std::string>& labels, Rng& rng) {
  auto used = [&](char cls) {
    std::set<int> out;
    for (std::size_t i = 0; i + 2 < tpl.size(); ++i)
      if (tpl[i] == '$' && tpl[i + 1] == cls && std::isdigit(tpl[i + 2]))
        out.insert(tpl[i + 2] - '0');
    return out;
  };
  auto draw = [&](char cls, const std::vector<std::string>& pool,
                  std::vector<std::pair<std::string, std::string>>& map) {
    auto slots = used(cls);
    if (slots.size() > pool.size())
      throw std::logic_error("template needs more names than the pool holds");
    std::vector<std::string> bag = pool;
    shuffle(bag, rng);
    std::size_t next = 0;
    for (int s : slots)
      map.emplace_back(std::string("$") + cls + char('0' + s), bag[next++]);
  };
  std::vector<std::pair<std::string, std::string>> map;
  draw('v', vars, map);
  draw('m', methods, map);
  draw('L', labels, map);
  return map;
}

// ---- program shape templates; $v*/$m*/$L* are filled in later -------------

std::string tpl_sum_loop(Rng& rng) {
  const int init = static_cast<int>(rng.uniform_int(3));
  const int step = 1 + static_cast<int>(rng.uniform_int(3));
  const char* rel = rng.uniform_int(2) ? "<" : "<=";
  const bool tail = rng.uniform_int(2) != 0;
  std::ostringstream os;
  os << "method $m0($v0) {\n"
        "  $v1 = " << init << ";\n"
      "  $v2 = 0;\n"
      "  $L0: $v1 = $v1 + $v2;\n"
      "  $v2 = $v2 + " << step << ";\n"
      "  if $v2 " << rel << " $v0 goto $L0;\n";
  if (tail)
    os << "  $v3 = $v1;\n"
          "  return $v3;\n";
  else
    os << "  return $v1;\n";
  os << "}\n";
  return os.str();
}

std::string tpl_select(Rng& rng) {
  const std::vector<std::string> rels = {"<=", ">=", "<", ">"};
  std::string r = pick(rels, rng);
  if (rng.uniform_int(2)) {
    return
        "method $m0($v0, $v1, $v2) {\n"
        "  $v3 = $v0;\n"
        "  if $v3 " + r + " $v1 goto $L0;\n"
        "  $v3 = $v1;\n"
        "  $L0: if $v3 " + r + " $v2 goto $L1;\n"
        "  $v3 = $v2;\n"
        "  $L1: return $v3;\n"
        "}\n";
  }
  return
      "method $m0($v0, $v1) {\n"
      "  $v3 = $v0;\n"
      "  if $v3 " + r + " $v1 goto $L0;\n"
      "  $v3 = $v1;\n"
      "  $L0: return $v3;\n"
      "}\n";
}

std::string tpl_reduce(Rng& rng) {
  if (rng.uniform_int(2)) {
    return
        "method $m0($v0, $v1) {\n"
        "  $L0: if $v0 == $v1 goto $L1;\n"
        "  if $v0 < $v1 goto $L2;\n"
        "  $v0 = $v0 - $v1;\n"
        "  goto $L0;\n"
        "  $L2: $v1 = $v1 - $v0;\n"
        "  goto $L0;\n"
        "  $L1: return $v0;\n"
        "}\n";
  }
  return
      "method $m0($v0, $v1) {\n"
      "  $L0: $v2 = $v0 % $v1;\n"
      "  $v0 = $v1;\n"
      "  $v1 = $v2;\n"
      "  if $v1 != 0 goto $L0;\n"
      "  return $v0;\n"
      "}\n";
}

std::string tpl_mul_call(Rng& rng) {
  const char* op = rng.uniform_int(2) ? "*" : "+";
  std::string helper =
      "method $m1($v4, $v5) {\n"
      "  $v6 = $v4 " + std::string(op) + " $v5;\n"
      "  return $v6;\n"
      "}\n";
  std::string main =
      "method $m0($v0, $v1) {\n"
      "  $v2 = 1;\n"
      "  $v3 = 0;\n"
      "  $L0: $v2 = call $m1($v2, $v0);\n"
      "  $v3 = $v3 + 1;\n"
      "  if $v3 < $v1 goto $L0;\n"
      "  return $v2;\n"
      "}\n";
  return rng.uniform_int(2) ? helper + main : main + helper;
}

std::string tpl_chain(Rng& rng) {
  const int len = 4 + static_cast<int>(rng.uniform_int(4));
  std::ostringstream os;
  os << "method $m0($v0) {\n"
        "  $v1 = $v0 * $v0;\n";
  const char* ops[] = {"+", "*", "-"};
  for (int i = 2; i <= len; ++i) {
    os << "  $v" << i << " = $v" << (i - 1) << " "
       << ops[rng.uniform_int(3)] << " ";
    if (rng.uniform_int(2))
      os << "$v" << static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i - 1)) + 1);
    else
      os << (1 + rng.uniform_int(9));
    os << ";\n";
  }
  os << "  return $v" << len << ";\n}\n";
  return os.str();
}

std::string tpl_nested_loop(Rng& rng) {
  const char* rel = rng.uniform_int(2) ? "<" : "<=";
  std::ostringstream os;
  os << "method $m0($v0) {\n"
        "  $v1 = 0;\n"
        "  $v2 = 0;\n"
        "  $L0: $v3 = 0;\n"
        "  $L1: $v1 = $v1 + $v3;\n"
        "  $v3 = $v3 + 1;\n"
        "  if $v3 " << rel << " $v0 goto $L1;\n"
        "  $v2 = $v2 + 1;\n"
        "  if $v2 < $v0 goto $L0;\n"
        "  return $v1;\n"
        "}\n";
  return os.str();
}

std::string tpl_early_return(Rng& rng) {
  const char* rel = rng.uniform_int(2) ? ">=" : ">";
  const int c = static_cast<int>(rng.uniform_int(3));
  std::ostringstream os;
  os << "method $m0($v0) {\n"
        "  if $v0 " << rel << " " << c << " goto $L0;\n"
        "  $v1 = 0 - $v0;\n"
        "  return $v1;\n"
        "  $L0: return $v0;\n"
        "}\n";
  return os.str();
}

std::string tpl_call_chain(Rng& rng) {
  const int c0 = 1 + static_cast<int>(rng.uniform_int(5));
  const int c1 = 2 + static_cast<int>(rng.uniform_int(3));
  std::ostringstream os;
  os << "method $m1($v3) {\n"
        "  $v4 = $v3 + " << c0 << ";\n"
        "  return $v4;\n"
        "}\n"
        "method $m2($v5) {\n"
        "  $v6 = call $m1($v5);\n"
        "  $v7 = $v6 * " << c1 << ";\n"
        "  return $v7;\n"
        "}\n"
        "method $m0($v0) {\n"
        "  $v1 = call $m2($v0);\n"
        "  $v2 = $v1 - 1;\n"
        "  return $v2;\n"
        "}\n";
  return os.str();
}

std::string tpl_compare_heavy(Rng& rng) {
  const char* r0 = rng.uniform_int(2) ? "<" : "<=";
  std::ostringstream os;
  os << "method $m0($v0, $v1) {\n"
        "  $v2 = $v0 " << r0 << " $v1;\n"
        "  $v3 = $v0 == $v1;\n"
        "  $v4 = $v2 + $v3;\n"
        "  if $v4 > 0 goto $L0;\n"
        "  $v4 = 0 - $v4;\n"
        "  $L0: return $v4;\n"
        "}\n";
  return os.str();
}

std::string tpl_countdown(Rng& rng) {
  const int step = 1 + static_cast<int>(rng.uniform_int(2));
  std::ostringstream os;
  os << "method $m0($v0) {\n"
        "  $v1 = $v0;\n"
        "  $L0: $v1 = $v1 - " << step << ";\n"
        "  if $v1 > 0 goto $L0;\n"
        "  return $v1;\n"
        "}\n";
  return os.str();
}

using Builder = std::string (*)(Rng&);
const std::vector<Builder> kAllShapes = {
    tpl_sum_loop,   tpl_select,       tpl_reduce,     tpl_mul_call,
    tpl_chain,      tpl_nested_loop,  tpl_early_return, tpl_call_chain,
    tpl_compare_heavy, tpl_countdown};

// the five behavior classes of the solution-classification set
const std::vector<std::pair<std::string, Builder>> kSolutionClasses = {
    {"loop_add", tpl_sum_loop},     {"branch_select", tpl_select},
    {"loop_reduce", tpl_reduce},    {"call_multiply", tpl_mul_call},
    {"straight_chain", tpl_chain}};

mir::Record make_record(const std::string& id, const std::string& source,
                        const std::optional<std::string>& label,
                        const std::optional<std::string>& group) {
  mir::Record r;
  r.id = id;
  r.program = mir::parse_program(source);
  r.program.name = id;  // the corpus loader names programs after their id
  r.program.label = label;
  r.program.group = group;
  return r;
}

std::string instance(Builder tpl, Rng& rng) {
  const std::string shape = tpl(rng);
  return materialize(shape, assign_names(shape, kVars, kMethods, kLabels, rng));
}

// words and single punctuation marks of the canonical printout, sorted;
// instruction reordering must not change this multiset
std::vector<std::string> token_multiset(const mir::Program& p) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : mir::print_program(p)) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      cur += ch;
      continue;
    }
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    if (!std::isspace(static_cast<unsigned char>(ch)))
      out.push_back(std::string(1, ch));
  }
  if (!cur.empty()) out.push_back(cur);
  std::sort(out.begin(), out.end());
  return out;
}

std::string reprint(const mir::Program& p) { return mir::print_program(p); }

// ---- behavior-preserving refactors for the clone corpus -------------------

std::set<std::string> method_names_used(const mir::Method& m) {
  std::set<std::string> used(m.params.begin(), m.params.end());
  used.insert(m.name);
  for (const auto& ins : m.instructions) {
    if (ins.def) used.insert(*ins.def);
    for (const auto& u : ins.uses) used.insert(u);
    if (!ins.callee.empty()) used.insert(ins.callee);
  }
  return used;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

bool is_simple(const mir::Instruction& ins) {
  return ins.kind == mir::Kind::Assign || ins.kind == mir::Kind::Arith ||
         ins.kind == mir::Kind::Compare;
}

// "x = a OP b" with a commutative OP and distinct operands -> "x = b OP a"
bool commute_one(mir::Method& m, Rng& rng) {
  std::vector<std::size_t> cands;
  for (std::size_t i = 0; i < m.instructions.size(); ++i) {
    const auto& ins = m.instructions[i];
    if (ins.kind != mir::Kind::Arith) continue;
    auto t = split_ws(ins.text);
    if (t.size() == 5 && (t[3] == "+" || t[3] == "*") && t[2] != t[4])
      cands.push_back(i);
  }
  if (cands.empty()) return false;
  auto& ins = m.instructions[pick(cands, rng)];
  auto t = split_ws(ins.text);
  ins.text = t[0] + " = " + t[4] + " " + t[3] + " " + t[2];
  return true;
}

// "x = RHS" -> "tmp = RHS; x = tmp" with a fresh temporary
bool introduce_temp(mir::Method& m, Rng& rng) {
  std::vector<std::size_t> cands;
  for (std::size_t i = 0; i < m.instructions.size(); ++i) {
    const auto& ins = m.instructions[i];
    if (is_simple(ins) && ins.def) cands.push_back(i);
  }
  if (cands.empty()) return false;
  const std::size_t at = pick(cands, rng);
  const auto used = method_names_used(m);
  std::string tmp;
  // prefer a name the unlabeled corpus already covers so the new statement
  // embeds in-distribution
  for (const auto& pool : {kVars, kTemps}) {
    for (const auto& cand : pool)
      if (!used.count(cand)) {
        tmp = cand;
        break;
      }
    if (!tmp.empty()) break;
  }
  if (tmp.empty()) return false;

  mir::Instruction first = m.instructions[at];
  const std::string def = *first.def;
  const std::string rhs = first.text.substr(def.size() + 3);
  mir::Instruction second;
  first.text = tmp + " = " + rhs;
  first.def = tmp;
  second.text = def + " = " + tmp;
  second.def = def;
  second.uses = {tmp};  // keeps the later swap pass honest about the hazard
  second.kind = mir::Kind::Assign;
  m.instructions.insert(m.instructions.begin() +
                            static_cast<std::ptrdiff_t>(at) + 1,
                        second);
  m.instructions[at] = first;
  return true;
}

// swaps an adjacent pair of independent unlabeled simple statements
bool swap_adjacent(mir::Method& m, Rng& rng) {
  std::vector<std::size_t> cands;
  for (std::size_t i = 0; i + 1 < m.instructions.size(); ++i) {
    const auto& a = m.instructions[i];
    const auto& b = m.instructions[i + 1];
    if (!is_simple(a) || !is_simple(b)) continue;
    if (!a.label.empty() || !b.label.empty()) continue;
    if (!a.def || !b.def || *a.def == *b.def) continue;
    auto uses_of = [](const mir::Instruction& x) {
      return std::set<std::string>(x.uses.begin(), x.uses.end());
    };
    if (uses_of(b).count(*a.def) || uses_of(a).count(*b.def)) continue;
    cands.push_back(i);
  }
  if (cands.empty()) return false;
  const std::size_t i = pick(cands, rng);
  std::swap(m.instructions[i], m.instructions[i + 1]);
  return true;
}

// a refactor clone reorders commutative operands or independent statements
// when it can, splitting a statement through a temporary only as a fallback
std::string refactor(const std::string& source, Rng& rng) {
  mir::Program p = mir::parse_program(source);
  bool changed = false;
  for (auto& m : p.methods) {
    if (commute_one(m, rng)) changed = true;
    if (swap_adjacent(m, rng)) changed = true;
  }
  // statement-splitting is the fallback for methods that offer neither a
  // commutative operand pair nor an independent adjacent pair
  if (!changed)
    for (auto& m : p.methods)
      if (introduce_temp(m, rng)) changed = true;
  if (!changed)
    throw std::logic_error("refactor left the program unchanged");
  return reprint(p);
}

// shuffles whole instructions (labels travel with their statement) until the
// dependence graph differs; tokens are untouched by construction
std::string shuffle_structure(const std::string& source, Rng& rng,
                              bool* graph_changed) {
  mir::Program orig = mir::parse_program(source);
  const auto before = depgraph::build_program_graph(orig).edges;
  for (int attempt = 0; attempt < 60; ++attempt) {
    mir::Program p = orig;
    bool moved = false;
    for (auto& m : p.methods) {
      if (m.instructions.size() < 3) continue;
      std::vector<mir::Instruction> shuffled = m.instructions;
      shuffle(shuffled, rng);
      if (!(shuffled == m.instructions)) moved = true;
      m.instructions = shuffled;
    }
    if (!moved) continue;
    const std::string text = reprint(p);
    mir::Program re = mir::parse_program(text);
    if (depgraph::build_program_graph(re).edges != before) {
      *graph_changed = true;
      return text;
    }
  }
  *graph_changed = false;
  return source;
}

void append_jsonl(std::ostream& os, const mir::Record& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["code"] = mir::print_program(r.program);
  if (r.program.label) j["label"] = *r.program.label;
  if (r.program.group) j["group"] = *r.program.group;
  os << j.dump() << "\n";
}

}  // namespace

const std::vector<mir::Record>& DeskCorpora::by_name(
    const std::string& name) const {
  if (name == "pretrain") return pretrain;
  if (name == "solution") return solution;
  if (name == "clones") return clones;
  if (name == "names") return names;
  if (name == "probe_token") return probe_token;
  if (name == "probe_structure") return probe_structure;
  throw std::invalid_argument("unknown corpus: " + name);
}

DeskCorpora generate_desk_corpora(std::uint64_t seed) {
  DeskCorpora out;
  Rng root = Rng::seeded(seed);

  // solution classification: 5 behavior classes x 40 variants, balanced
  {
    Rng rng = root.fork(1);
    for (const auto& [label, tpl] : kSolutionClasses)
      for (int k = 0; k < 40; ++k)
        out.solution.push_back(make_record(
            "sol." + label + "." + std::to_string(k), instance(tpl, rng),
            label, {}));
  }

  // clone triples: original, rename clone, refactor clone per group, plus a
  // 10-program unrelated control set
  {
    Rng rng = root.fork(2);
    for (int k = 0; k < 12; ++k) {
      Builder tpl = kAllShapes[static_cast<std::size_t>(k) % kAllShapes.size()];
      const std::string shape = tpl(rng);
      auto map1 = assign_names(shape, kVars, kMethods, kLabels, rng);
      auto map2 = assign_names(shape, kVars, kMethods, kLabels, rng);
      while (map2 == map1)
        map2 = assign_names(shape, kVars, kMethods, kLabels, rng);
      const std::string group = "clone" + std::to_string(k);
      const std::string orig = materialize(shape, map1);
      out.clones.push_back(make_record(group + ".orig", orig, {}, group));
      out.clones.push_back(
          make_record(group + ".ren", materialize(shape, map2), {}, group));
      out.clones.push_back(
          make_record(group + ".ref", refactor(orig, rng), {}, group));

      // a rename clone must leave the dependence graph untouched
      const auto& o = out.clones[out.clones.size() - 3].program;
      const auto& r = out.clones[out.clones.size() - 2].program;
      if (depgraph::build_program_graph(o).edges !=
          depgraph::build_program_graph(r).edges)
        throw std::logic_error("rename clone changed the dependence graph");
    }
    // controls mimic methods from unrelated projects: ten distinct shapes
    // with near-disjoint identifier pools, so no pair reads like a clone
    std::vector<std::string> all_vars = kVars;
    std::vector<std::string> all_methods = kMethods;
    std::vector<std::string> all_labels = kLabels;
    for (const auto& fam : kFamilies) {
      all_vars.insert(all_vars.end(), fam.vars.begin(), fam.vars.end());
      all_methods.insert(all_methods.end(), fam.methods.begin(),
                         fam.methods.end());
      all_labels.insert(all_labels.end(), fam.labels.begin(),
                        fam.labels.end());
    }
    auto ring = [](const std::vector<std::string>& pool, std::size_t start,
                   std::size_t stride, std::size_t n) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < n; ++i)
        out.push_back(pool[(start * stride + i) % pool.size()]);
      return out;
    };
    for (std::size_t k = 0; k < 10; ++k) {
      Builder tpl = kAllShapes[k];
      const std::string shape = tpl(rng);
      auto map = assign_names(shape, ring(all_vars, k, 6, 8),
                              ring(all_methods, k, 2, 3),
                              ring(all_labels, k, 2, 3), rng);
      out.clones.push_back(make_record("ctrl" + std::to_string(k),
                                       materialize(shape, map), {},
                                       "ctrl" + std::to_string(k)));
    }
  }

  // method-name prediction: the accumulator variable carries the noun and the
  // verb adds a small structural twist, so the name is recoverable
  {
    Rng rng = root.fork(3);
    int k = 0;
    auto emit = [&](const std::string& verb, const std::string& noun) {
      std::string tpl;
      if (noun == "sum") {
        tpl =
            "method $m0($v0) {\n"
            "  NOUN = 0;\n"
            "  $v1 = 0;\n"
            "  $L0: NOUN = NOUN + $v1;\n"
            "  $v1 = $v1 + 1;\n"
            "  if $v1 < $v0 goto $L0;\n"
            "  TAIL"
            "  return NOUN;\n"
            "}\n";
      } else if (noun == "product") {
        tpl =
            "method $m0($v0, $v1) {\n"
            "  NOUN = 1;\n"
            "  $L0: NOUN = NOUN * $v0;\n"
            "  $v1 = $v1 - 1;\n"
            "  if $v1 > 0 goto $L0;\n"
            "  TAIL"
            "  return NOUN;\n"
            "}\n";
      } else if (noun == "max") {
        tpl =
            "method $m0($v0, $v1) {\n"
            "  NOUN = $v0;\n"
            "  if NOUN >= $v1 goto $L0;\n"
            "  NOUN = $v1;\n"
            "  $L0: TAIL"
            "  return NOUN;\n"
            "}\n";
      } else if (noun == "delta") {
        tpl =
            "method $m0($v0, $v1) {\n"
            "  NOUN = $v0 - $v1;\n"
            "  if NOUN >= 0 goto $L0;\n"
            "  NOUN = 0 - NOUN;\n"
            "  $L0: TAIL"
            "  return NOUN;\n"
            "}\n";
      } else {  // ratio
        tpl =
            "method $m0($v0, $v1) {\n"
            "  NOUN = $v0 / $v1;\n"
            "  $v2 = $v0 % $v1;\n"
            "  NOUN = NOUN + $v2;\n"
            "  TAIL"
            "  return NOUN;\n"
            "}\n";
      }
      std::string tail;
      if (verb == "find")
        tail = "$v3 = NOUN == 0;\n  ";
      else if (verb == "count")
        tail = "$v3 = NOUN + 1;\n  ";
      else if (verb == "scale")
        tail = "NOUN = NOUN * " + std::to_string(2 + rng.uniform_int(3)) +
               ";\n  ";
      else if (verb == "track")
        tail = "$v3 = NOUN;\n  ";
      // compute: no tail
      std::size_t at = tpl.find("TAIL");
      tpl.replace(at, 4, tail);

      const std::string name = verb + "_" + noun;
      auto map = assign_names(tpl, kVars, kMethods, kLabels, rng);
      for (auto& [ph, nm] : map)
        if (ph == "$m0") nm = name;
      std::string text = tpl;
      std::size_t pos = 0;
      while ((pos = text.find("NOUN", pos)) != std::string::npos) {
        text.replace(pos, 4, noun);
        pos += noun.size();
      }
      out.names.push_back(make_record("name" + std::to_string(k++),
                                      materialize(text, map), name, {}));
    };
    for (const auto& verb : kVerbs)
      for (const auto& noun : kNouns) emit(verb, noun);
    for (int extra = 0; extra < 25; ++extra)
      emit(kVerbs[static_cast<std::size_t>(extra) % kVerbs.size()],
           kNouns[static_cast<std::size_t>(extra / 2) % kNouns.size()]);
  }

  // token-discrimination probing set: structure is noise drawn independently
  // of the class; identifiers come from the family's exclusive pool
  {
    Rng rng = root.fork(4);
    for (int k = 0; k < 120; ++k) {
      const int fam = k % 4;
      const auto& pool = kFamilies[static_cast<std::size_t>(fam)];
      Builder tpl = kAllShapes[static_cast<std::size_t>(
          rng.uniform_int(kAllShapes.size()))];
      const std::string shape = tpl(rng);
      const std::string text = materialize(
          shape,
          assign_names(shape, pool.vars, pool.methods, pool.labels, rng));
      out.probe_token.push_back(make_record("tok" + std::to_string(k), text,
                                            "fam" + std::to_string(fam), {}));
    }
  }

  // structure-discrimination probing set: each base contributes its original
  // and an instruction-shuffled mutant with an identical token multiset
  {
    Rng rng = root.fork(5);
    int made = 0;
    for (int base = 0; made < 30 && base < 200; ++base) {
      Builder tpl = kAllShapes[static_cast<std::size_t>(base) % kAllShapes.size()];
      const std::string orig = instance(tpl, rng);
      bool changed = false;
      const std::string mut = shuffle_structure(orig, rng, &changed);
      if (!changed) continue;  // this instance resists shuffling; draw another

      mir::Record ro = make_record("st" + std::to_string(made) + ".orig", orig,
                                   std::string("orig"), {});
      mir::Record rm = make_record("st" + std::to_string(made) + ".mut", mut,
                                   std::string("mut"), {});
      if (token_multiset(ro.program) != token_multiset(rm.program))
        throw std::logic_error("structure mutant changed the token multiset");
      out.probe_structure.push_back(std::move(ro));
      out.probe_structure.push_back(std::move(rm));
      ++made;
    }
    if (made < 30)
      throw std::logic_error("could not build enough structure mutants");
  }

  // pre-training corpus: a spread over every shape and identifier pool so the
  // subword vocabulary covers all downstream corpora
  {
    Rng rng = root.fork(6);
    int k = 0;
    auto add = [&](const std::string& text) {
      out.pretrain.push_back(
          make_record("pre" + std::to_string(k++), text, {}, {}));
    };
    for (const auto& [label, tpl] : kSolutionClasses) {
      add(instance(tpl, rng));
      add(instance(tpl, rng));
    }
    for (Builder tpl : kAllShapes) add(instance(tpl, rng));
    for (int i = 0; i < 18; ++i) {
      const auto& verb = kVerbs[static_cast<std::size_t>(i) % kVerbs.size()];
      const auto& noun = kNouns[static_cast<std::size_t>(i) % kNouns.size()];
      std::string tpl =
          "method " + verb + "_" + noun + "($v0, $v1) {\n"
          "  " + noun + " = $v0 + $v1;\n"
          "  " + noun + " = " + noun + " * $v0;\n"
          "  if " + noun + " > 0 goto $L0;\n"
          "  " + noun + " = 0 - " + noun + ";\n"
          "  $L0: return " + noun + ";\n"
          "}\n";
      add(materialize(tpl, assign_names(tpl, kVars, kMethods, kLabels, rng)));
    }
    for (const auto& fam : kFamilies) {
      for (int i = 0; i < 3; ++i) {
        Builder tpl = kAllShapes[static_cast<std::size_t>(
            rng.uniform_int(kAllShapes.size()))];
        const std::string shape = tpl(rng);
        add(materialize(shape, assign_names(shape, fam.vars, fam.methods,
                                            fam.labels, rng)));
      }
    }
    add(instance(tpl_call_chain, rng));
    add(instance(tpl_nested_loop, rng));
    add(instance(tpl_reduce, rng));
    add(instance(tpl_sum_loop, rng));
    add(instance(tpl_select, rng));
    add(instance(tpl_compare_heavy, rng));
  }

  return out;
}

std::string to_jsonl(const std::vector<mir::Record>& records) {
  std::ostringstream os;
  for (const auto& r : records) append_jsonl(os, r);
  return os.str();
}

void write_corpora(const DeskCorpora& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<std::pair<std::string, const std::vector<mir::Record>*>>
      files = {{"pretrain", &c.pretrain},
               {"solution", &c.solution},
               {"clones", &c.clones},
               {"names", &c.names},
               {"probe_token", &c.probe_token},
               {"probe_structure", &c.probe_structure}};
  for (const auto& [name, records] : files) {
    std::ofstream os(dir + "/" + name + ".jsonl", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + dir + "/" + name + ".jsonl");
    os << to_jsonl(*records);
  }
}

}  // namespace depvec::corpora
