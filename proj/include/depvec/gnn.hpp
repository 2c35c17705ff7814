#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "depvec/depgraph.hpp"
#include "depvec/lexical.hpp"
#include "depvec/mir.hpp"
#include "depvec/tensor.hpp"

namespace depvec::gnn {

enum class Arch { Gcn, Gin, Sage, Gat };

const char* arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

// one message-passing layer; which weights exist depends on the architecture
struct GnnLayer {
  Arch arch = Arch::Gat;
  // edge attribute table, 5 rows: one per edge type plus a direction offset
  // added to mirrored edges; width = layer input dim
  Tensor T;
  Tensor W;                       // GCN / SAGE / GAT
  Tensor a;                       // GAT attention vector {2*d_out, 1}
  Tensor eps, W1, b1, W2, b2;     // GIN: (1+eps)*h + sum, then 2-layer MLP
  double dropout = 0.2;

  std::int64_t in_dim() const { return T.shape()[1]; }
  std::int64_t out_dim() const;

  static GnnLayer init(Arch arch, std::int64_t d_in, std::int64_t d_out,
                       Rng& rng, double dropout = 0.2);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

// uniform view over method- and program-level graphs
struct GraphRef {
  std::int64_t n_nodes = 0;
  const std::vector<depgraph::Edge>* edges = nullptr;

  GraphRef(const depgraph::MethodGraph& g)
      : n_nodes(g.nodes()), edges(&g.edges) {}
  GraphRef(const depgraph::ProgramGraph& g)
      : n_nodes(g.n_nodes), edges(&g.edges) {}
  GraphRef(std::int64_t n, const std::vector<depgraph::Edge>& e)
      : n_nodes(n), edges(&e) {}
};

// one round of message passing; messages are H[src] + edge embedding, the
// combine step follows the layer architecture; dropout runs iff rng given
Tensor message_pass(const GnnLayer& layer, GraphRef g, const Tensor& H,
                    Rng* dropout_rng = nullptr);

// GAT attention coefficients: alpha[i] weights entry i (self entries for each
// node first, then forward edges, then mirrored edges), grouped by dst
struct GatAttention {
  Tensor alpha;                    // {n_entries, 1}
  std::vector<std::int64_t> dst;   // receiving node per entry
};
GatAttention gat_attention(const GnnLayer& layer, GraphRef g, const Tensor& H);

struct GnnStack {
  std::vector<GnnLayer> layers;

  static GnnStack init(Arch arch, std::int64_t width, std::int64_t n_layers,
                       Rng& rng, double dropout = 0.2);
  Tensor encode(GraphRef g, const Tensor& X, Rng* dropout_rng = nullptr) const;
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix = "gnn") const;
};

// global attention pool: sigmoid gate scalar per node times a linear
// transform, summed over nodes in content-sorted row order so any node
// permutation produces a bit-identical vector
struct Readout {
  Tensor wg;   // {d_in, 1}
  Tensor bg;   // {1}
  Tensor Wt;   // {d_in, d_out}

  static Readout init(std::int64_t d_in, std::int64_t d_out, Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

Tensor attention_readout(const Readout& r, const Tensor& H);

// final code vector: [lexical embedding ; attention readout of the GNN-encoded
// dependence graph]
Tensor code_embedding(const mir::Method& m, const lexical::LexModel& lex,
                      const GnnStack& stack, const Readout& readout);
Tensor code_embedding(const mir::Program& p, const lexical::LexModel& lex,
                      const GnnStack& stack, const Readout& readout);

}  // namespace depvec::gnn
