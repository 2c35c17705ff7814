#include "depvec/model.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace depvec::model {

void Model::collect_encoder(
    std::vector<std::pair<std::string, Tensor>>& out) const {
  lex.collect(out);
  stack.collect(out);
}

void Model::collect(std::vector<std::pair<std::string, Tensor>>& out) const {
  collect_encoder(out);
  readout.collect(out);
}

Model make_model(lexical::SubwordVocab vocab, Tensor E, gnn::Arch arch,
                 std::int64_t n_layers, std::int64_t lstm_hidden,
                 std::int64_t readout_dim, double dropout, Rng& rng) {
  if (E.rank() != 2 || E.shape()[0] != vocab.size())
    throw std::invalid_argument(
        "make_model: token table must have one row per vocab entry");
  Model m;
  m.arch = arch;
  m.dropout = dropout;
  m.lex.vocab = std::move(vocab);
  m.lex.E = E.set_requires_grad(true);
  m.lex.net = lexical::BiLstm::init(E.shape()[1], lstm_hidden, rng);
  m.stack = gnn::GnnStack::init(arch, 2 * lstm_hidden, n_layers, rng, dropout);
  m.readout = gnn::Readout::init(2 * lstm_hidden, readout_dim, rng);
  return m;
}

namespace {

constexpr const char* kHeader = "DEPVEC-CKPT v1";

std::string fmt32(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v)));
  return buf;
}

[[noreturn]] void truncated(const std::string& what) {
  throw CheckpointError("truncated checkpoint: " + what);
}

std::string need_line(std::istream& is, const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) truncated(what);
  return line;
}

// "key value" header line; value may contain spaces only for provenance
std::string header_field(std::istream& is, const std::string& key) {
  std::string line = need_line(is, "missing \"" + key + "\" field");
  if (line.size() <= key.size() || line.compare(0, key.size(), key) != 0 ||
      line[key.size()] != ' ')
    throw CheckpointError("bad checkpoint field: expected \"" + key +
                          " ...\", got \"" + line + "\"");
  return line.substr(key.size() + 1);
}

std::int64_t to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CheckpointError("bad checkpoint field: " + what + " \"" + s + "\"");
  }
}

}  // namespace

std::string save_checkpoint(const Model& m) {
  std::ostringstream os;
  os << kHeader << '\n';
  os << "arch " << gnn::arch_name(m.arch) << '\n';
  os << "layers " << m.stack.layers.size() << '\n';
  os << "token_dim " << m.token_dim() << '\n';
  os << "lstm_hidden " << m.lstm_hidden() << '\n';
  os << "readout_dim " << m.readout_dim() << '\n';
  os << "dropout " << fmt32(m.dropout) << '\n';
  os << "provenance " << m.provenance << '\n';

  const std::string vt = lexical::save_vocab(m.lex.vocab);
  os << "vocab "
     << m.lex.vocab.merges.size() + m.lex.vocab.id_to_token.size() << '\n'
     << vt;

  std::vector<std::pair<std::string, Tensor>> params;
  m.collect(params);
  for (const auto& [name, t] : params) {
    os << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) os << ' ' << d;
    os << '\n';
    for (std::int64_t i = 0; i < t.size(); ++i) {
      if (i) os << ' ';
      os << fmt32(t.data()[i]);
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

Model load_checkpoint(const std::string& text) {
  std::istringstream is(text);
  const std::string header = need_line(is, "empty file");
  if (header != kHeader) {
    if (header.rfind("DEPVEC-CKPT", 0) == 0)
      throw CheckpointError("unsupported checkpoint version \"" + header +
                            "\"; supported: " + kHeader);
    throw CheckpointError("not a checkpoint (missing DEPVEC-CKPT header)");
  }

  const gnn::Arch arch = gnn::arch_from_name(header_field(is, "arch"));
  const std::int64_t layers = to_int(header_field(is, "layers"), "layers");
  const std::int64_t token_dim =
      to_int(header_field(is, "token_dim"), "token_dim");
  const std::int64_t lstm_hidden =
      to_int(header_field(is, "lstm_hidden"), "lstm_hidden");
  const std::int64_t readout_dim =
      to_int(header_field(is, "readout_dim"), "readout_dim");
  double dropout = 0.0;
  try {
    dropout = std::stod(header_field(is, "dropout"));
  } catch (const std::invalid_argument&) {
    throw CheckpointError("bad checkpoint field: dropout");
  }
  const std::string provenance = header_field(is, "provenance");

  const std::int64_t vocab_lines =
      to_int(header_field(is, "vocab"), "vocab line count");
  std::string vocab_text;
  for (std::int64_t i = 0; i < vocab_lines; ++i)
    vocab_text += need_line(is, "vocab section ends early") + "\n";
  lexical::SubwordVocab vocab;
  try {
    vocab = lexical::load_vocab(vocab_text);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad vocab section: ") + e.what());
  }

  Rng scratch = Rng::seeded(0);
  Tensor E = Tensor::param({vocab.size(), token_dim}, scratch, 0.0, 0.0);
  Model m = make_model(std::move(vocab), E, arch, layers, lstm_hidden,
                       readout_dim, dropout, scratch);
  m.provenance = provenance;

  std::vector<std::pair<std::string, Tensor>> params;
  m.collect(params);
  std::map<std::string, Tensor> by_name(params.begin(), params.end());
  std::set<std::string> filled;

  for (;;) {
    std::string line = need_line(is, "missing \"end\" marker");
    if (line == "end") break;
    std::istringstream rec(line);
    std::string tag, name;
    std::int64_t rank = 0;
    if (!(rec >> tag >> name >> rank) || tag != "tensor")
      throw CheckpointError("bad tensor record \"" + line + "\"");
    Shape shape;
    for (std::int64_t i = 0; i < rank; ++i) {
      std::int64_t d = 0;
      if (!(rec >> d)) truncated("tensor \"" + name + "\" record lacks dims");
      shape.push_back(d);
    }
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("unexpected tensor \"" + name + "\"");
    Tensor t = it->second;
    if (shape != t.shape()) {
      std::ostringstream msg;
      msg << "shape mismatch for \"" << name << "\"";
      throw CheckpointError(msg.str());
    }
    std::istringstream vals(need_line(is, "tensor \"" + name + "\" has no values"));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      float v = 0.0f;
      if (!(vals >> v))
        truncated("tensor \"" + name + "\" value data ends early");
      t.data()[i] = static_cast<double>(v);
    }
    filled.insert(name);
  }
  if (filled.size() != by_name.size())
    truncated("expected " + std::to_string(by_name.size()) + " tensors, got " +
              std::to_string(filled.size()));
  return m;
}

void save_checkpoint_file(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint file " + path);
  out << save_checkpoint(m);
}

Model load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_checkpoint(buf.str());
}

Model train_base_model(const std::vector<mir::Record>& corpus, gnn::Arch arch,
                       std::int64_t n_layers, double dropout,
                       std::uint64_t seed, std::int64_t bpe_size) {
  std::vector<std::string> texts;
  for (const auto& r : corpus)
    for (const auto& m : r.program.methods)
      for (const auto& ins : m.instructions) texts.push_back(ins.text);
  auto vocab = lexical::train_bpe(texts, bpe_size);

  std::vector<std::vector<std::int64_t>> sequences;
  for (const auto& r : corpus)
    for (const auto& m : r.program.methods)
      for (const auto& ins : m.instructions)
        sequences.push_back(lexical::tokenize_instruction(ins, vocab));
  lexical::SgnsConfig scfg;
  scfg.seed = seed;
  auto sgns = lexical::train_sgns(sequences, vocab.size(), scfg);

  Rng rng = Rng::seeded(seed).fork(1);
  return make_model(std::move(vocab), sgns.E, arch, n_layers, 150, 300,
                    dropout, rng);
}

}  // namespace depvec::model
