#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace depvec::mir {

// instruction taxonomy; also the label set for node-level classification
enum class Kind {
  Assign = 0,
  Arith = 1,
  Compare = 2,
  Branch = 3,
  Jump = 4,
  Call = 5,
  Return = 6,
};
constexpr int kKindCount = 7;
const char* kind_name(Kind k);

struct Instruction {
  std::int64_t index = 0;
  Kind kind = Kind::Assign;
  std::string label;  // empty when the line is unlabeled
  std::string text;   // canonical statement, label excluded
  std::optional<std::string> def;
  std::vector<std::string> uses;
  std::string callee;       // CALL only
  std::string jump_target;  // BRANCH/JUMP only

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Method {
  std::string name;
  std::vector<std::string> params;
  std::vector<Instruction> instructions;
  std::map<std::string, std::int64_t> labels;  // label -> instruction index

  friend bool operator==(const Method&, const Method&) = default;
};

struct Program {
  std::string name;
  std::vector<Method> methods;
  std::map<std::string, std::int64_t> method_index;  // name -> methods[] slot
  std::optional<std::string> label;  // classification target, when labeled
  std::optional<std::string> group;  // clone group id, when grouped

  const Method* find(const std::string& method_name) const {
    auto it = method_index.find(method_name);
    return it == method_index.end() ? nullptr : &methods[it->second];
  }

  friend bool operator==(const Program&, const Program&) = default;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Program parse_program(const std::string& text);

// canonical printout; parse(print(parse(text))) is structurally equal
std::string print_program(const Program& p);

struct Diagnostic {
  std::string method;
  std::int64_t index = 0;  // instruction index, -1 for method-level issues
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

// use-before-def and missing-return are reported here, not thrown
std::vector<Diagnostic> validate(const Program& p);

struct Record {
  std::string id;
  Program program;
};

// JSON-Lines corpus: {"id", "code", "label"?, "group"?} per line
std::vector<Record> load_corpus(const std::string& path);
std::vector<Record> load_corpus_text(const std::string& text);

}  // namespace depvec::mir
