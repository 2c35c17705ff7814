#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "depvec/mir.hpp"
#include "depvec/rng.hpp"
#include "depvec/tensor.hpp"

namespace depvec::lexical {

struct SubwordVocab {
  // merge rank = position in the table
  std::vector<std::pair<std::string, std::string>> merges;
  std::vector<std::string> id_to_token;
  std::map<std::string, std::int64_t> token_to_id;

  static constexpr std::int64_t kUnk = 0;
  static constexpr std::int64_t kPad = 1;

  std::int64_t size() const {
    return static_cast<std::int64_t>(id_to_token.size());
  }
  std::int64_t id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

// whitespace/punctuation split, camelCase and snake_case boundaries,
// lowercased; this is the unit sequence BPE merges operate on
std::vector<std::string> split_pieces(const std::string& text);

SubwordVocab train_bpe(const std::vector<std::string>& texts,
                       std::int64_t target_size);

std::vector<std::int64_t> tokenize_text(const std::string& text,
                                        const SubwordVocab& vocab);
std::vector<std::int64_t> tokenize_instruction(const mir::Instruction& ins,
                                               const SubwordVocab& vocab);

std::string save_vocab(const SubwordVocab& vocab);
SubwordVocab load_vocab(const std::string& text);

struct SgnsConfig {
  std::int64_t dim = 100;
  std::int64_t window = 8;
  std::int64_t negatives = 5;
  std::int64_t epochs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct SgnsResult {
  Tensor E;  // input embeddings, one row per vocab id
  Tensor O;  // output-side embeddings used by the objective
  std::vector<double> epoch_loss;
};

// batched objective: -log sigma(e.o_ctx) over (centers, contexts) plus
// -log sigma(-e.o_neg) over (neg_centers, negatives)
Tensor sgns_pair_loss(const Tensor& E, const Tensor& O,
                      const std::vector<std::int64_t>& centers,
                      const std::vector<std::int64_t>& contexts,
                      const std::vector<std::int64_t>& neg_centers,
                      const std::vector<std::int64_t>& negatives);

SgnsResult train_sgns(const std::vector<std::vector<std::int64_t>>& corpus,
                      std::int64_t vocab_size, const SgnsConfig& cfg);

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const std::string& token, std::int64_t k, const Tensor& E,
    const SubwordVocab& vocab);

struct LstmCell {
  Tensor Wx[4], Wh[4], b[4];  // input, forget, cell, output gates

  static LstmCell init(std::int64_t in_dim, std::int64_t hidden, Rng& rng);
  // advances (h, c) by one step; h and c are [1,H]
  void step(const Tensor& x, Tensor& h, Tensor& c) const;
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct BiLstm {
  LstmCell fwd, bwd;
  std::int64_t hidden = 150;

  static BiLstm init(std::int64_t in_dim, std::int64_t hidden, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

// concatenation of final forward and backward hidden states, [1, 2H]
Tensor encode_instruction(const BiLstm& net, const std::vector<std::int64_t>& ids,
                          const Tensor& E);

struct LexModel {
  SubwordVocab vocab;
  Tensor E;  // [|C|, d]
  BiLstm net;

  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// element-wise sum of instruction encodings, summed in sorted-text order so
// any instruction permutation yields a bit-identical vector
Tensor lexical_embedding(const LexModel& model, const mir::Method& method);
Tensor lexical_embedding(const LexModel& model, const mir::Program& program);

}  // namespace depvec::lexical
