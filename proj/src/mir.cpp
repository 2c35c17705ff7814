#include "depvec/mir.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace depvec::mir {

namespace {

struct Token {
  enum Type { Name, Int, Punct, End } type = End;
  std::string text;
  int line = 0, col = 0;
};

const std::set<std::string> kKeywords = {"method", "if", "goto", "return",
                                         "call"};
const std::set<std::string> kBinops = {"+", "-", "*", "/", "%"};
const std::set<std::string> kRelops = {"<", "<=", "==", "!=", ">", ">="};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : s_(text) {
    cur_ = scan();
    ahead_ = scan();
  }

  const Token& peek() const { return cur_; }
  const Token& peek2() const { return ahead_; }

  Token next() {
    Token t = cur_;
    cur_ = ahead_;
    ahead_ = scan();
    return t;
  }

  [[noreturn]] void fail(const std::string& what, const Token& at) const {
    throw ParseError("line " + std::to_string(at.line) + ", column " +
                     std::to_string(at.col) + ": " + what);
  }

 private:
  Token scan() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else {
        break;
      }
    }
    Token tok{Token::End, "", line_, col_};
    if (pos_ >= s_.size()) return tok;
    char c = s_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
              s_[pos_] == '_'))
        take();
      tok.type = Token::Name;
      tok.text = s_.substr(start, pos_ - start);
      return tok;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             std::isdigit(static_cast<unsigned char>(s_[pos_])))
        take();
      tok.type = Token::Int;
      tok.text = s_.substr(start, pos_ - start);
      return tok;
    }
    tok.type = Token::Punct;
    if ((c == '<' || c == '>' || c == '=' || c == '!') && pos_ + 1 < s_.size() &&
        s_[pos_ + 1] == '=') {
      tok.text = s_.substr(pos_, 2);
      take();
      take();
      return tok;
    }
    static const std::string singles = "(){};:,=+-*/%<>";
    if (singles.find(c) == std::string::npos)
      throw ParseError("line " + std::to_string(line_) + ", column " +
                       std::to_string(col_) + ": unexpected character '" +
                       std::string(1, c) + "'");
    tok.text = std::string(1, c);
    take();
    return tok;
  }

  void take() {
    ++pos_;
    ++col_;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_, ahead_;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lx_(text) {}

  Program parse() {
    Program p;
    while (lx_.peek().type != Token::End) p_method(p);
    if (p.methods.empty()) lx_.fail("expected 'method'", lx_.peek());
    return p;
  }

 private:
  Token expect_name(const char* what) {
    Token t = lx_.next();
    if (t.type != Token::Name || kKeywords.count(t.text))
      lx_.fail(std::string("expected ") + what, t);
    return t;
  }

  void expect_punct(const std::string& text) {
    Token t = lx_.next();
    if (t.type != Token::Punct || t.text != text)
      lx_.fail("expected '" + text + "'", t);
  }

  void expect_keyword(const std::string& kw) {
    Token t = lx_.next();
    if (t.type != Token::Name || t.text != kw)
      lx_.fail("expected '" + kw + "'", t);
  }

  bool peek_punct(const std::string& text) const {
    return lx_.peek().type == Token::Punct && lx_.peek().text == text;
  }

  bool peek_keyword(const std::string& kw) const {
    return lx_.peek().type == Token::Name && lx_.peek().text == kw;
  }

  // atom := NAME | INT; names are recorded as uses
  std::string p_atom(Instruction& ins) {
    Token t = lx_.next();
    if (t.type == Token::Name && !kKeywords.count(t.text)) {
      ins.uses.push_back(t.text);
      return t.text;
    }
    if (t.type == Token::Int) return t.text;
    lx_.fail("expected a variable or integer", t);
  }

  std::string p_args(Instruction& ins) {
    expect_punct("(");
    std::string joined;
    if (!peek_punct(")")) {
      joined = p_atom(ins);
      while (peek_punct(",")) {
        lx_.next();
        joined += ", " + p_atom(ins);
      }
    }
    expect_punct(")");
    return joined;
  }

  Instruction p_stmt() {
    Instruction ins;
    if (peek_keyword("if")) {
      lx_.next();
      std::string a = p_atom(ins);
      Token op = lx_.next();
      if (op.type != Token::Punct || !kRelops.count(op.text))
        lx_.fail("expected a comparison operator", op);
      std::string b = p_atom(ins);
      expect_keyword("goto");
      Token lbl = expect_name("a label");
      ins.kind = Kind::Branch;
      ins.jump_target = lbl.text;
      ins.text = "if " + a + " " + op.text + " " + b + " goto " + lbl.text;
      return ins;
    }
    if (peek_keyword("goto")) {
      lx_.next();
      Token lbl = expect_name("a label");
      ins.kind = Kind::Jump;
      ins.jump_target = lbl.text;
      ins.text = "goto " + lbl.text;
      return ins;
    }
    if (peek_keyword("return")) {
      lx_.next();
      ins.kind = Kind::Return;
      ins.text = "return";
      if (!peek_punct(";")) ins.text += " " + p_atom(ins);
      return ins;
    }
    if (peek_keyword("call")) {
      lx_.next();
      Token callee = expect_name("a method name");
      ins.kind = Kind::Call;
      ins.callee = callee.text;
      ins.text = "call " + callee.text + "(" + p_args(ins) + ")";
      return ins;
    }
    Token lhs = expect_name("a statement");
    expect_punct("=");
    ins.def = lhs.text;
    if (peek_keyword("call")) {
      lx_.next();
      Token callee = expect_name("a method name");
      ins.kind = Kind::Call;
      ins.callee = callee.text;
      ins.text = lhs.text + " = call " + callee.text + "(" + p_args(ins) + ")";
      return ins;
    }
    std::string a = p_atom(ins);
    if (lx_.peek().type == Token::Punct &&
        (kBinops.count(lx_.peek().text) || kRelops.count(lx_.peek().text))) {
      Token op = lx_.next();
      std::string b = p_atom(ins);
      ins.kind = kBinops.count(op.text) ? Kind::Arith : Kind::Compare;
      ins.text = lhs.text + " = " + a + " " + op.text + " " + b;
      return ins;
    }
    ins.kind = Kind::Assign;
    ins.text = lhs.text + " = " + a;
    return ins;
  }

  void p_method(Program& p) {
    expect_keyword("method");
    Token name = expect_name("a method name");
    if (p.method_index.count(name.text))
      lx_.fail("duplicate method '" + name.text + "'", name);
    Method m;
    m.name = name.text;
    expect_punct("(");
    if (!peek_punct(")")) {
      m.params.push_back(expect_name("a parameter name").text);
      while (peek_punct(",")) {
        lx_.next();
        m.params.push_back(expect_name("a parameter name").text);
      }
    }
    expect_punct(")");
    expect_punct("{");
    while (!peek_punct("}")) {
      if (lx_.peek().type == Token::End) lx_.fail("expected '}'", lx_.peek());
      std::string label;
      if (lx_.peek().type == Token::Name && !kKeywords.count(lx_.peek().text) &&
          lx_.peek2().type == Token::Punct && lx_.peek2().text == ":") {
        Token lbl = lx_.next();
        lx_.next();  // :
        if (m.labels.count(lbl.text))
          lx_.fail("duplicate label '" + lbl.text + "'", lbl);
        label = lbl.text;
        m.labels[label] = static_cast<std::int64_t>(m.instructions.size());
      }
      Instruction ins = p_stmt();
      expect_punct(";");
      ins.label = label;
      ins.index = static_cast<std::int64_t>(m.instructions.size());
      m.instructions.push_back(std::move(ins));
    }
    lx_.next();  // }
    if (m.instructions.empty())
      lx_.fail("method '" + m.name + "' has no instructions", name);
    for (const auto& ins : m.instructions)
      if (!ins.jump_target.empty() && !m.labels.count(ins.jump_target))
        throw ParseError("method '" + m.name + "': unresolved label '" +
                         ins.jump_target + "'");
    p.method_index[m.name] = static_cast<std::int64_t>(p.methods.size());
    p.methods.push_back(std::move(m));
  }

  Lexer lx_;
};

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Assign: return "ASSIGN";
    case Kind::Arith: return "ARITH";
    case Kind::Compare: return "COMPARE";
    case Kind::Branch: return "BRANCH";
    case Kind::Jump: return "JUMP";
    case Kind::Call: return "CALL";
    case Kind::Return: return "RETURN";
  }
  return "?";
}

Program parse_program(const std::string& text) {
  return Parser(text).parse();
}

std::string print_program(const Program& p) {
  std::ostringstream os;
  for (const auto& m : p.methods) {
    os << "method " << m.name << "(";
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (i) os << ", ";
      os << m.params[i];
    }
    os << ") {\n";
    for (const auto& ins : m.instructions) {
      os << "  ";
      if (!ins.label.empty()) os << ins.label << ": ";
      os << ins.text << ";\n";
    }
    os << "}\n";
  }
  return os.str();
}

std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> out;
  for (const auto& m : p.methods) {
    std::set<std::string> defined(m.params.begin(), m.params.end());
    for (const auto& ins : m.instructions) {
      for (const auto& u : ins.uses)
        if (!defined.count(u))
          out.push_back(
              {m.name, ins.index, "use of '" + u + "' before definition"});
      if (ins.def) defined.insert(*ins.def);
    }

    const std::int64_t n = static_cast<std::int64_t>(m.instructions.size());
    std::vector<bool> seen(n, false);
    std::vector<std::int64_t> work = {0};
    bool falls_off = false;
    while (!work.empty()) {
      std::int64_t i = work.back();
      work.pop_back();
      if (i >= n) {
        falls_off = true;
        continue;
      }
      if (seen[i]) continue;
      seen[i] = true;
      const Instruction& ins = m.instructions[i];
      if (ins.kind == Kind::Return) continue;
      if (ins.kind == Kind::Jump) {
        work.push_back(m.labels.at(ins.jump_target));
        continue;
      }
      if (ins.kind == Kind::Branch) work.push_back(m.labels.at(ins.jump_target));
      work.push_back(i + 1);
    }
    if (falls_off)
      out.push_back(
          {m.name, n - 1, "control can fall off the end without a return"});
  }
  return out;
}

namespace {

Record parse_record(const nlohmann::json& j, std::int64_t line_no) {
  const std::string where = "record at line " + std::to_string(line_no);
  if (!j.is_object()) throw CorpusError(where + ": not a JSON object");
  if (!j.contains("id") || !j["id"].is_string())
    throw CorpusError(where + ": missing string field \"id\"");
  if (!j.contains("code") || !j["code"].is_string())
    throw CorpusError(where + ": missing string field \"code\"");
  Record r;
  r.id = j["id"].get<std::string>();
  try {
    r.program = parse_program(j["code"].get<std::string>());
  } catch (const ParseError& e) {
    throw CorpusError(where + " (id \"" + r.id + "\"): " + e.what());
  }
  r.program.name = r.id;
  if (j.contains("label") && j["label"].is_string())
    r.program.label = j["label"].get<std::string>();
  if (j.contains("group") && j["group"].is_string())
    r.program.group = j["group"].get<std::string>();
  return r;
}

}  // namespace

std::vector<Record> load_corpus_text(const std::string& text) {
  std::vector<Record> out;
  std::istringstream in(text);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("record at line " + std::to_string(line_no) +
                        ": invalid JSON: " + e.what());
    }
    out.push_back(parse_record(j, line_no));
  }
  return out;
}

std::vector<Record> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_corpus_text(ss.str());
}

}  // namespace depvec::mir
