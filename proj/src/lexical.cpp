#include "depvec/lexical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "depvec/adam.hpp"
#include "depvec/compose.hpp"

namespace depvec::lexical {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// camelCase boundaries: aB, 1B, and the last capital of a run before a
// lowercase letter (HTTPServer -> HTTP Server)
void split_camel(const std::string& w, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < w.size(); ++i) {
    const unsigned char prev = w[i - 1], cur = w[i];
    bool boundary = false;
    if (std::isupper(cur)) {
      if (std::islower(prev) || std::isdigit(prev)) boundary = true;
      else if (std::isupper(prev) && i + 1 < w.size() &&
               std::islower(static_cast<unsigned char>(w[i + 1])))
        boundary = true;
    }
    if (boundary) {
      out.push_back(lower(w.substr(start, i - start)));
      start = i;
    }
  }
  out.push_back(lower(w.substr(start)));
}

void split_word(const std::string& w, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 0; i <= w.size(); ++i) {
    if (i == w.size() || w[i] == '_') {
      if (i > start) split_camel(w.substr(start, i - start), out);
      start = i + 1;
    }
  }
}

const std::set<std::string> kTwoCharOps = {"<=", "==", "!=", ">="};

}  // namespace

std::vector<std::string> split_pieces(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      split_word(text.substr(i, j - i), out);
      i = j;
      continue;
    }
    if (i + 1 < text.size() &&
        kTwoCharOps.count(text.substr(i, 2))) {
      out.push_back(text.substr(i, 2));
      i += 2;
      continue;
    }
    out.push_back(std::string(1, c));
    ++i;
  }
  return out;
}

SubwordVocab train_bpe(const std::vector<std::string>& texts,
                       std::int64_t target_size) {
  std::map<std::string, std::int64_t> piece_counts;
  for (const auto& t : texts)
    for (auto& p : split_pieces(t)) ++piece_counts[p];
  if (piece_counts.empty())
    throw std::invalid_argument("train-bpe: empty corpus");

  std::set<std::string> alphabet;
  for (const auto& [p, _] : piece_counts)
    for (char c : p) alphabet.insert(std::string(1, c));
  const std::int64_t floor_size = static_cast<std::int64_t>(alphabet.size()) + 2;
  if (target_size < floor_size)
    throw std::invalid_argument(
        "train-bpe: target size " + std::to_string(target_size) +
        " below alphabet plus specials (" + std::to_string(floor_size) + ")");

  SubwordVocab v;
  v.id_to_token = {"<unk>", "<pad>"};
  for (const auto& c : alphabet) v.id_to_token.push_back(c);

  struct Word {
    std::vector<std::string> syms;
    std::int64_t count;
  };
  std::vector<Word> words;
  for (const auto& [p, n] : piece_counts) {
    Word w;
    for (char c : p) w.syms.push_back(std::string(1, c));
    w.count = n;
    words.push_back(std::move(w));
  }

  while (static_cast<std::int64_t>(v.id_to_token.size()) < target_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pairs;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i)
        pairs[{w.syms[i], w.syms[i + 1]}] += w.count;
    std::pair<std::string, std::string> best;
    std::int64_t best_count = 0;
    for (const auto& [pr, n] : pairs)
      if (n > best_count) {  // map order makes ties lexicographic
        best = pr;
        best_count = n;
      }
    if (best_count < 2) break;
    v.merges.push_back(best);
    v.id_to_token.push_back(best.first + best.second);
    for (auto& w : words) {
      std::vector<std::string> merged;
      std::size_t i = 0;
      while (i < w.syms.size()) {
        if (i + 1 < w.syms.size() && w.syms[i] == best.first &&
            w.syms[i + 1] == best.second) {
          merged.push_back(w.syms[i] + w.syms[i + 1]);
          i += 2;
        } else {
          merged.push_back(w.syms[i]);
          ++i;
        }
      }
      w.syms = std::move(merged);
    }
  }

  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<std::int64_t>(i);
  return v;
}

namespace {

std::vector<std::string> apply_merges(const std::string& piece,
                                      const SubwordVocab& v) {
  std::vector<std::string> syms;
  for (char c : piece) syms.push_back(std::string(1, c));
  std::map<std::pair<std::string, std::string>, std::size_t> rank;
  for (std::size_t r = 0; r < v.merges.size(); ++r) rank[v.merges[r]] = r;
  while (syms.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank.find({syms[i], syms[i + 1]});
      if (it != rank.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto& pr = v.merges[best_rank];
    std::vector<std::string> merged;
    std::size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == pr.first &&
          syms[i + 1] == pr.second) {
        merged.push_back(syms[i] + syms[i + 1]);
        i += 2;
      } else {
        merged.push_back(syms[i]);
        ++i;
      }
    }
    syms = std::move(merged);
  }
  return syms;
}

}  // namespace

std::vector<std::int64_t> tokenize_text(const std::string& text,
                                        const SubwordVocab& vocab) {
  std::vector<std::int64_t> out;
  for (const auto& piece : split_pieces(text))
    for (const auto& sym : apply_merges(piece, vocab))
      out.push_back(vocab.id_of(sym));
  return out;
}

std::vector<std::int64_t> tokenize_instruction(const mir::Instruction& ins,
                                               const SubwordVocab& vocab) {
  return tokenize_text(ins.text, vocab);
}

std::string save_vocab(const SubwordVocab& vocab) {
  std::ostringstream os;
  for (std::size_t r = 0; r < vocab.merges.size(); ++r)
    os << r << '\t' << vocab.merges[r].first << '\t' << vocab.merges[r].second
       << '\n';
  for (std::size_t i = 0; i < vocab.id_to_token.size(); ++i)
    os << i << '\t' << vocab.id_to_token[i] << '\n';
  return os.str();
}

SubwordVocab load_vocab(const std::string& text) {
  SubwordVocab v;
  std::istringstream in(text);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (fields.size() == 3) {
      if (std::stoll(fields[0]) != static_cast<long long>(v.merges.size()))
        throw std::runtime_error("vocab: merge ranks not consecutive at line " +
                                 std::to_string(line_no));
      v.merges.emplace_back(fields[1], fields[2]);
    } else if (fields.size() == 2) {
      if (std::stoll(fields[0]) !=
          static_cast<long long>(v.id_to_token.size()))
        throw std::runtime_error("vocab: token ids not dense at line " +
                                 std::to_string(line_no));
      v.id_to_token.push_back(fields[1]);
    } else {
      throw std::runtime_error("vocab: malformed line " +
                               std::to_string(line_no));
    }
  }
  if (v.id_to_token.size() < 2 || v.id_to_token[0] != "<unk>" ||
      v.id_to_token[1] != "<pad>")
    throw std::runtime_error("vocab: missing special tokens");
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<std::int64_t>(i);
  return v;
}

Tensor sgns_pair_loss(const Tensor& E, const Tensor& O,
                      const std::vector<std::int64_t>& centers,
                      const std::vector<std::int64_t>& contexts,
                      const std::vector<std::int64_t>& neg_centers,
                      const std::vector<std::int64_t>& negatives) {
  Tensor e = gather_rows(E, centers);
  Tensor o = gather_rows(O, contexts);
  Tensor pos = sum(mul(e, o), 1);
  Tensor loss = sum(softplus(smul(pos, -1.0)), -1);
  if (!negatives.empty()) {
    Tensor en = gather_rows(E, neg_centers);
    Tensor on = gather_rows(O, negatives);
    Tensor neg = sum(mul(en, on), 1);
    loss = add(loss, sum(softplus(neg), -1));
  }
  return loss;
}

SgnsResult train_sgns(const std::vector<std::vector<std::int64_t>>& corpus,
                      std::int64_t vocab_size, const SgnsConfig& cfg) {
  std::int64_t total = 0;
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto& seq : corpus)
    for (auto id : seq) {
      if (id < 0 || id >= vocab_size)
        throw std::invalid_argument("train-sgns: token id outside vocab");
      counts[id] += 1.0;
      ++total;
    }
  if (total < 2)
    throw std::invalid_argument("train-sgns: corpus has fewer than 2 tokens");

  // unigram distribution raised to 3/4, as a cumulative table
  std::vector<double> cum(vocab_size, 0.0);
  double acc = 0.0;
  for (std::int64_t i = 0; i < vocab_size; ++i) {
    acc += std::pow(counts[i], 0.75);
    cum[i] = acc;
  }

  Rng rng = Rng::seeded(cfg.seed);
  SgnsResult res;
  const double span = 0.5 / static_cast<double>(cfg.dim);
  res.E = Tensor::param({vocab_size, cfg.dim}, rng, -span, span);
  res.O = Tensor::param({vocab_size, cfg.dim}, rng, -span, span);

  Adam opt(cfg.lr);
  opt.add("sgns.E", res.E);
  opt.add("sgns.O", res.O);

  auto draw_negative = [&]() {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    return static_cast<std::int64_t>(it - cum.begin());
  };

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& seq : corpus) {
      std::vector<std::int64_t> centers, contexts, neg_centers, negatives;
      const std::int64_t n = static_cast<std::int64_t>(seq.size());
      for (std::int64_t t = 0; t < n; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - cfg.window);
        const std::int64_t hi = std::min(n - 1, t + cfg.window);
        for (std::int64_t p = lo; p <= hi; ++p) {
          if (p == t) continue;
          centers.push_back(seq[t]);
          contexts.push_back(seq[p]);
          for (std::int64_t d = 0; d < cfg.negatives; ++d) {
            const std::int64_t neg = draw_negative();
            if (neg == seq[p]) continue;  // skip draws that hit the context
            neg_centers.push_back(seq[t]);
            negatives.push_back(neg);
          }
        }
      }
      if (centers.empty()) continue;
      Tape tape;
      TapeScope scope(tape);
      Tensor loss =
          sgns_pair_loss(res.E, res.O, centers, contexts, neg_centers, negatives);
      epoch_loss += loss.item();
      backward(loss, tape);
      opt.step();
    }
    res.epoch_loss.push_back(epoch_loss);
  }
  return res;
}

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const std::string& token, std::int64_t k, const Tensor& E,
    const SubwordVocab& vocab) {
  auto it = vocab.token_to_id.find(token);
  if (it == vocab.token_to_id.end())
    throw std::invalid_argument("nearest-neighbors: unknown token '" + token +
                                "'");
  const std::int64_t q = it->second;
  const std::int64_t d = E.cols();
  auto row_dot = [&](std::int64_t a, std::int64_t b) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j)
      s += E.data()[a * d + j] * E.data()[b * d + j];
    return s;
  };
  const double qn = std::sqrt(row_dot(q, q));
  std::vector<std::pair<double, std::int64_t>> scored;
  for (std::int64_t i = 0; i < E.rows() && i < vocab.size(); ++i) {
    if (i == q) continue;
    const double in = std::sqrt(row_dot(i, i));
    const double denom = qn * in;
    scored.push_back({denom > 0.0 ? row_dot(q, i) / denom : 0.0, i});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::pair<std::string, double>> out;
  for (std::int64_t i = 0; i < k && i < static_cast<std::int64_t>(scored.size());
       ++i)
    out.push_back({vocab.id_to_token[scored[i].second], scored[i].first});
  return out;
}

LstmCell LstmCell::init(std::int64_t in_dim, std::int64_t hidden, Rng& rng) {
  LstmCell c;
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int g = 0; g < 4; ++g) {
    c.Wx[g] = Tensor::param({in_dim, hidden}, rng, -s, s);
    c.Wh[g] = Tensor::param({hidden, hidden}, rng, -s, s);
    c.b[g] = Tensor::param({1, hidden}, rng, -s, s);
  }
  return c;
}

void LstmCell::step(const Tensor& x, Tensor& h, Tensor& c) const {
  auto gate = [&](int g) {
    return add(add(matmul(x, Wx[g]), matmul(h, Wh[g])), b[g]);
  };
  Tensor i = sigmoid(gate(0));
  Tensor f = sigmoid(gate(1));
  Tensor g = tanh(gate(2));
  Tensor o = sigmoid(gate(3));
  c = add(mul(f, c), mul(i, g));
  h = mul(o, tanh(c));
}

void LstmCell::collect(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) const {
  static const char* gates = "ifgo";
  for (int g = 0; g < 4; ++g) {
    out.push_back({prefix + ".Wx_" + gates[g], Wx[g]});
    out.push_back({prefix + ".Wh_" + gates[g], Wh[g]});
    out.push_back({prefix + ".b_" + gates[g], b[g]});
  }
}

BiLstm BiLstm::init(std::int64_t in_dim, std::int64_t hidden, Rng& rng) {
  BiLstm n;
  n.hidden = hidden;
  n.fwd = LstmCell::init(in_dim, hidden, rng);
  n.bwd = LstmCell::init(in_dim, hidden, rng);
  return n;
}

void BiLstm::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor>>& out) const {
  fwd.collect(prefix + ".fwd", out);
  bwd.collect(prefix + ".bwd", out);
}

Tensor encode_instruction(const BiLstm& net, const std::vector<std::int64_t>& ids,
                          const Tensor& E) {
  if (ids.empty())
    throw std::invalid_argument("encode-instruction: empty subword sequence");
  Tensor X = gather_rows(E, ids);
  const std::int64_t T = X.rows();
  Tensor hf = Tensor::zeros({1, net.hidden}), cf = Tensor::zeros({1, net.hidden});
  for (std::int64_t t = 0; t < T; ++t)
    net.fwd.step(slice(X, 0, t, t + 1), hf, cf);
  Tensor hb = Tensor::zeros({1, net.hidden}), cb = Tensor::zeros({1, net.hidden});
  for (std::int64_t t = T - 1; t >= 0; --t)
    net.bwd.step(slice(X, 0, t, t + 1), hb, cb);
  return concat({hf, hb}, 1);
}

void LexModel::collect(std::vector<std::pair<std::string, Tensor>>& out) const {
  out.push_back({"lex.E", E});
  net.collect("lex.net", out);
}

namespace {

// summation runs in sorted-text order: equal texts encode to equal vectors,
// so any instruction permutation yields a bit-identical sum
Tensor sum_encodings(const LexModel& model,
                     const std::vector<const mir::Instruction*>& instructions) {
  std::vector<const mir::Instruction*> order = instructions;
  std::sort(order.begin(), order.end(),
            [](const mir::Instruction* a, const mir::Instruction* b) {
              return a->text < b->text;
            });
  Tensor total;
  for (const auto* ins : order) {
    Tensor enc = encode_instruction(
        model.net, tokenize_instruction(*ins, model.vocab), model.E);
    total = total.defined() ? add(total, enc) : enc;
  }
  return total;
}

}  // namespace

Tensor lexical_embedding(const LexModel& model, const mir::Method& method) {
  if (method.instructions.empty())
    throw std::invalid_argument("lexical-embedding: method '" + method.name +
                                "' is empty");
  std::vector<const mir::Instruction*> all;
  for (const auto& ins : method.instructions) all.push_back(&ins);
  return sum_encodings(model, all);
}

Tensor lexical_embedding(const LexModel& model, const mir::Program& program) {
  std::vector<const mir::Instruction*> all;
  for (const auto& m : program.methods) {
    if (m.instructions.empty())
      throw std::invalid_argument("lexical-embedding: method '" + m.name +
                                  "' is empty");
    for (const auto& ins : m.instructions) all.push_back(&ins);
  }
  if (all.empty())
    throw std::invalid_argument("lexical-embedding: empty program");
  return sum_encodings(model, all);
}

}  // namespace depvec::lexical
