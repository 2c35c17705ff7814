#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "depvec/gnn.hpp"
#include "depvec/lexical.hpp"
#include "depvec/tensor.hpp"

namespace depvec::model {

// full encoder: subword lexical encoder + dependence GNN + readout
struct Model {
  lexical::LexModel lex;
  gnn::GnnStack stack;
  gnn::Readout readout;
  gnn::Arch arch = gnn::Arch::Gat;
  double dropout = 0.2;
  std::string provenance = "none";  // which pre-training produced the weights

  std::int64_t token_dim() const { return lex.E.shape()[1]; }
  std::int64_t lstm_hidden() const { return lex.net.fwd.Wx[0].shape()[1]; }
  std::int64_t width() const { return 2 * lstm_hidden(); }
  std::int64_t readout_dim() const { return readout.Wt.shape()[1]; }
  std::int64_t embedding_dim() const { return width() + readout_dim(); }

  // encoder params only (lexical + gnn stack); pre-training trains these
  void collect_encoder(std::vector<std::pair<std::string, Tensor>>& out) const;
  // everything, for checkpointing
  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// fresh model around an existing vocab and token table (e.g. SGNS output)
Model make_model(lexical::SubwordVocab vocab, Tensor E, gnn::Arch arch,
                 std::int64_t n_layers, std::int64_t lstm_hidden,
                 std::int64_t readout_dim, double dropout, Rng& rng);

// full-size encoder over a corpus: BPE vocab, SGNS token table, fresh
// BiLSTM + GNN; hidden 150 -> lexical width 300, readout 300, embedding 600
Model train_base_model(const std::vector<mir::Record>& corpus, gnn::Arch arch,
                       std::int64_t n_layers, double dropout,
                       std::uint64_t seed, std::int64_t bpe_size = 256);

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// versioned text container; values stored as fp32 decimals that round-trip
// exactly, so save -> load -> save reproduces the file byte for byte
std::string save_checkpoint(const Model& m);
Model load_checkpoint(const std::string& text);
void save_checkpoint_file(const Model& m, const std::string& path);
Model load_checkpoint_file(const std::string& path);

}  // namespace depvec::model
