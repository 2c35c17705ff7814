#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "depvec/depgraph.hpp"
#include "depvec/gnn.hpp"
#include "depvec/mir.hpp"
#include "depvec/model.hpp"
#include "depvec/tensor.hpp"

namespace depvec::pretrain {

enum class Strategy { Node, Context, Vgae };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct PretrainConfig {
  Strategy strategy = Strategy::Context;
  std::int64_t epochs = 1;
  std::uint64_t seed = 0;
  std::int64_t k = 2;        // neighborhood radius
  std::int64_t r1 = 1;       // ring inner radius, r1 < k and r1 < r2
  std::int64_t r2 = 3;       // ring outer radius
  std::int64_t negatives = 1;
  double lr = 1e-3;

  void validate() const;
};

// hop distances from src over the mirrored edge list; -1 = unreachable
std::vector<std::int64_t> hop_distances(gnn::GraphRef g, std::int64_t src);

// induced subgraph; nodes keep ascending original-id order and edges keep
// their original list order with endpoints relabeled
struct Subgraph {
  std::vector<std::int64_t> nodes;      // original ids
  std::vector<depgraph::Edge> edges;    // relabeled to 0..nodes-1
  std::int64_t anchor_pos = -1;         // anchor's position in nodes, if any
};

Subgraph neighborhood_subgraph(gnn::GraphRef g, std::int64_t anchor,
                               std::int64_t k);
Subgraph ring_subgraph(gnn::GraphRef g, std::int64_t anchor, std::int64_t r1,
                       std::int64_t r2);

// 7-way instruction-kind head over per-node GNN outputs
struct NodeClassHead {
  Tensor W;  // {width, 7}
  Tensor b;  // {1, 7}
  static NodeClassHead init(std::int64_t width, Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// mean cross-entropy over instruction nodes (pseudo nodes excluded); optional
// outputs report argmax accuracy over the same nodes
Tensor node_classification_loss(
    const gnn::GnnStack& stack, const NodeClassHead& head, gnn::GraphRef g,
    const Tensor& X, const std::vector<std::optional<mir::Kind>>& kinds,
    Rng* dropout_rng = nullptr, double* accuracy = nullptr);

// one positive (own ring context) and one negative (another anchor's ring
// context) per usable anchor; -log sigmoid(s.c+) - log sigmoid(-s.c-), summed
// over anchors; anchors with empty rings are skipped and counted
Tensor context_prediction_loss(const gnn::GnnStack& m_s,
                               const gnn::GnnStack& m_c, gnn::GraphRef g,
                               const Tensor& X, const PretrainConfig& cfg,
                               Rng& pick, std::int64_t* skipped = nullptr,
                               Rng* dropout_rng = nullptr);

// variational heads over the encoder output
struct VgaeHeads {
  Tensor Wmu, bmu;  // {width, width}, {1, width}
  Tensor Wlv, blv;
  static VgaeHeads init(std::int64_t width, Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// type-blind adjacency reconstruction (unordered pairs, 1:1 negative
// subsample) + per-node KL to the standard normal
Tensor vgae_loss(const gnn::GnnStack& stack, const VgaeHeads& heads,
                 gnn::GraphRef g, const Tensor& X, Rng& noise,
                 double* bce = nullptr, bool* kl_only = nullptr,
                 Rng* dropout_rng = nullptr);

struct PretrainResult {
  std::vector<double> epoch_loss;       // mean per-graph loss each epoch
  std::vector<double> epoch_accuracy;   // node strategy only
  std::int64_t skipped_anchors = 0;     // context strategy
  std::int64_t kl_only_graphs = 0;      // vgae strategy
};

// trains model.lex + model.stack in place (heads are discarded) and stamps
// model.provenance with the strategy name
PretrainResult pretrain_node_classification(model::Model& m,
                                            const std::vector<mir::Program>& corpus,
                                            const PretrainConfig& cfg);
PretrainResult pretrain_context_prediction(model::Model& m,
                                           const std::vector<mir::Program>& corpus,
                                           const PretrainConfig& cfg);
PretrainResult pretrain_vgae(model::Model& m,
                             const std::vector<mir::Program>& corpus,
                             const PretrainConfig& cfg);

// dispatch on cfg.strategy
PretrainResult pretrain(model::Model& m, const std::vector<mir::Program>& corpus,
                        const PretrainConfig& cfg);

}  // namespace depvec::pretrain
