#include "depvec/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <stdexcept>

#include "depvec/adam.hpp"
#include "depvec/compose.hpp"

namespace depvec::pretrain {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Node: return "node";
    case Strategy::Context: return "context";
    case Strategy::Vgae: return "vgae";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "node") return Strategy::Node;
  if (name == "context") return Strategy::Context;
  if (name == "vgae") return Strategy::Vgae;
  throw std::invalid_argument("unknown pre-training strategy \"" + name +
                              "\" (want node, context, or vgae)");
}

void PretrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("pretrain: epochs must be >= 1");
  if (r1 < 1 || r1 >= k)
    throw std::invalid_argument(
        "pretrain: ring inner radius must satisfy 1 <= r1 < k");
  if (r1 >= r2)
    throw std::invalid_argument("pretrain: ring radii must satisfy r1 < r2");
  if (negatives < 1)
    throw std::invalid_argument("pretrain: need at least one negative");
}

std::vector<std::int64_t> hop_distances(gnn::GraphRef g, std::int64_t src) {
  std::vector<std::vector<std::int64_t>> adj(
      static_cast<std::size_t>(g.n_nodes));
  for (const auto& e : *g.edges)
    adj[static_cast<std::size_t>(e.src)].push_back(e.dst);
  std::vector<std::int64_t> dist(static_cast<std::size_t>(g.n_nodes), -1);
  std::deque<std::int64_t> q;
  dist[static_cast<std::size_t>(src)] = 0;
  q.push_back(src);
  while (!q.empty()) {
    const std::int64_t v = q.front();
    q.pop_front();
    for (auto u : adj[static_cast<std::size_t>(v)])
      if (dist[static_cast<std::size_t>(u)] < 0) {
        dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
        q.push_back(u);
      }
  }
  return dist;
}

namespace {

Subgraph induced(gnn::GraphRef g, const std::vector<std::int64_t>& dist,
                 std::int64_t lo, std::int64_t hi, std::int64_t anchor) {
  Subgraph s;
  std::vector<std::int64_t> newid(static_cast<std::size_t>(g.n_nodes), -1);
  for (std::int64_t v = 0; v < g.n_nodes; ++v) {
    const std::int64_t d = dist[static_cast<std::size_t>(v)];
    if (d >= lo && d <= hi) {
      newid[static_cast<std::size_t>(v)] =
          static_cast<std::int64_t>(s.nodes.size());
      if (v == anchor)
        s.anchor_pos = static_cast<std::int64_t>(s.nodes.size());
      s.nodes.push_back(v);
    }
  }
  for (const auto& e : *g.edges) {
    const std::int64_t a = newid[static_cast<std::size_t>(e.src)];
    const std::int64_t b = newid[static_cast<std::size_t>(e.dst)];
    if (a >= 0 && b >= 0) s.edges.push_back({a, b, e.type, e.reversed});
  }
  return s;
}

}  // namespace

Subgraph neighborhood_subgraph(gnn::GraphRef g, std::int64_t anchor,
                               std::int64_t k) {
  return induced(g, hop_distances(g, anchor), 0, k, anchor);
}

Subgraph ring_subgraph(gnn::GraphRef g, std::int64_t anchor, std::int64_t r1,
                       std::int64_t r2) {
  return induced(g, hop_distances(g, anchor), r1, r2, -1);
}

NodeClassHead NodeClassHead::init(std::int64_t width, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  NodeClassHead h;
  h.W = Tensor::param({width, static_cast<std::int64_t>(mir::kKindCount)}, rng,
                      -s, s);
  h.b = Tensor::param({1, static_cast<std::int64_t>(mir::kKindCount)}, rng,
                      0.0, 0.0);
  return h;
}

void NodeClassHead::collect(
    std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back("head.node.W", W);
  out.emplace_back("head.node.b", b);
}

Tensor node_classification_loss(
    const gnn::GnnStack& stack, const NodeClassHead& head, gnn::GraphRef g,
    const Tensor& X, const std::vector<std::optional<mir::Kind>>& kinds,
    Rng* dropout_rng, double* accuracy) {
  std::vector<std::int64_t> ids;
  for (std::int64_t v = 0; v < g.n_nodes; ++v)
    if (kinds[static_cast<std::size_t>(v)]) ids.push_back(v);
  if (ids.empty())
    throw std::invalid_argument(
        "node_classification_loss: graph has no instruction nodes");

  Tensor H = stack.encode(g, X, dropout_rng);
  Tensor logits = add(matmul(gather_rows(H, ids), head.W), head.b);
  const std::int64_t m = logits.shape()[0];
  const std::int64_t c = logits.shape()[1];

  // constant per-row max keeps log-sum-exp stable and the gradient exact
  std::vector<double> rowmax(static_cast<std::size_t>(m));
  std::vector<double> onehot(static_cast<std::size_t>(m * c), 0.0);
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = logits.data() + i * c;
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    rowmax[static_cast<std::size_t>(i)] = row[best];
    const auto label = static_cast<std::int64_t>(
        *kinds[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])]);
    onehot[static_cast<std::size_t>(i * c + label)] = 1.0;
    if (best == label) ++correct;
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / static_cast<double>(m);

  Tensor maxc = Tensor::from({m, 1}, rowmax);
  Tensor lse = add(log(sum(exp(sub(logits, maxc)), 1)), maxc);
  Tensor picked = sum(mul(logits, Tensor::from({m, c}, onehot)), 1);
  return mean(sub(lse, picked));
}

Tensor context_prediction_loss(const gnn::GnnStack& m_s,
                               const gnn::GnnStack& m_c, gnn::GraphRef g,
                               const Tensor& X, const PretrainConfig& cfg,
                               Rng& pick, std::int64_t* skipped,
                               Rng* dropout_rng) {
  cfg.validate();
  std::vector<std::int64_t> valid;
  std::vector<Subgraph> rings(static_cast<std::size_t>(g.n_nodes));
  for (std::int64_t v = 0; v < g.n_nodes; ++v) {
    rings[static_cast<std::size_t>(v)] = ring_subgraph(g, v, cfg.r1, cfg.r2);
    if (!rings[static_cast<std::size_t>(v)].nodes.empty())
      valid.push_back(v);
    else if (skipped)
      ++*skipped;
  }
  if (valid.empty()) return Tensor();

  // each usable anchor's ring context, reused as negatives for other anchors
  std::vector<Tensor> context(static_cast<std::size_t>(g.n_nodes));
  for (auto v : valid) {
    const Subgraph& r = rings[static_cast<std::size_t>(v)];
    Tensor Hc = m_c.encode(
        gnn::GraphRef(static_cast<std::int64_t>(r.nodes.size()), r.edges),
        gather_rows(X, r.nodes), dropout_rng);
    context[static_cast<std::size_t>(v)] = mean(Hc, 0);
  }

  Tensor total;
  for (auto v : valid) {
    Subgraph nb = neighborhood_subgraph(g, v, cfg.k);
    Tensor Hs = m_s.encode(
        gnn::GraphRef(static_cast<std::int64_t>(nb.nodes.size()), nb.edges),
        gather_rows(X, nb.nodes), dropout_rng);
    Tensor s = slice(Hs, 0, nb.anchor_pos, nb.anchor_pos + 1);

    Tensor pos = sum(mul(s, context[static_cast<std::size_t>(v)]));
    Tensor term = smul(logsigmoid(pos), -1.0);
    if (valid.size() > 1) {
      for (std::int64_t j = 0; j < cfg.negatives; ++j) {
        std::int64_t u = v;
        while (u == v)
          u = valid[pick.uniform_int(valid.size())];
        Tensor neg = sum(mul(s, context[static_cast<std::size_t>(u)]));
        term = add(term, smul(logsigmoid(smul(neg, -1.0)), -1.0));
      }
    }
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

VgaeHeads VgaeHeads::init(std::int64_t width, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  VgaeHeads h;
  h.Wmu = Tensor::param({width, width}, rng, -s, s);
  h.bmu = Tensor::param({1, width}, rng, 0.0, 0.0);
  h.Wlv = Tensor::param({width, width}, rng, -s, s);
  h.blv = Tensor::param({1, width}, rng, 0.0, 0.0);
  return h;
}

void VgaeHeads::collect(
    std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back("head.vgae.Wmu", Wmu);
  out.emplace_back("head.vgae.bmu", bmu);
  out.emplace_back("head.vgae.Wlv", Wlv);
  out.emplace_back("head.vgae.blv", blv);
}

Tensor vgae_loss(const gnn::GnnStack& stack, const VgaeHeads& heads,
                 gnn::GraphRef g, const Tensor& X, Rng& noise, double* bce,
                 bool* kl_only, Rng* dropout_rng) {
  const std::int64_t n = g.n_nodes;
  Tensor H = stack.encode(g, X, dropout_rng);
  Tensor mu = add(matmul(H, heads.Wmu), heads.bmu);
  Tensor lv = add(matmul(H, heads.Wlv), heads.blv);
  const std::int64_t w = mu.shape()[1];

  std::vector<double> eta(static_cast<std::size_t>(n * w));
  for (auto& e : eta) e = noise.normal();
  Tensor z = add(mu, mul(exp(smul(lv, 0.5)), Tensor::from({n, w}, eta)));

  // type-blind unordered adjacency
  std::set<std::pair<std::int64_t, std::int64_t>> adj;
  for (const auto& e : *g.edges)
    if (e.src != e.dst)
      adj.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});

  std::vector<std::int64_t> us, vs;
  for (const auto& [a, b] : adj) {
    us.push_back(a);
    vs.push_back(b);
  }
  const std::int64_t n_pos = static_cast<std::int64_t>(us.size());

  // negatives 1:1, sampled without replacement among non-edges
  const std::int64_t candidates =
      n * (n - 1) / 2 - n_pos;
  std::int64_t want = std::min<std::int64_t>(n_pos, candidates);
  std::set<std::pair<std::int64_t, std::int64_t>> negs;
  std::int64_t attempts = 0;
  while (static_cast<std::int64_t>(negs.size()) < want &&
         attempts < 100 * (want + 1)) {
    ++attempts;
    auto a = static_cast<std::int64_t>(noise.uniform_int(static_cast<std::uint64_t>(n)));
    auto b = static_cast<std::int64_t>(noise.uniform_int(static_cast<std::uint64_t>(n)));
    if (a == b) continue;
    const std::pair<std::int64_t, std::int64_t> p{std::min(a, b), std::max(a, b)};
    if (adj.count(p)) continue;
    negs.insert(p);
  }
  for (const auto& [a, b] : negs) {
    us.push_back(a);
    vs.push_back(b);
  }
  const std::int64_t n_all = static_cast<std::int64_t>(us.size());

  Tensor loss;
  if (n_all > 0) {
    Tensor score = sum(mul(gather_rows(z, us), gather_rows(z, vs)), 1);
    std::vector<Tensor> parts;
    if (n_pos > 0)
      parts.push_back(softplus(smul(slice(score, 0, 0, n_pos), -1.0)));
    if (n_all > n_pos) parts.push_back(softplus(slice(score, 0, n_pos, n_all)));
    Tensor terms = parts.size() == 1 ? parts[0] : concat(parts, 0);
    Tensor rec = mean(terms);
    if (bce) *bce = rec.data()[0];
    if (kl_only) *kl_only = false;
    loss = rec;
  } else {
    if (bce) *bce = 0.0;
    if (kl_only) *kl_only = true;
  }

  Tensor ones = Tensor::from({n, w}, std::vector<double>(
                                         static_cast<std::size_t>(n * w), 1.0));
  Tensor per_node = sum(sub(sub(add(mul(mu, mu), exp(lv)), lv), ones), 1);
  Tensor kl = smul(mean(per_node), 0.5);
  return loss.defined() ? add(loss, kl) : kl;
}

namespace {

struct Trainer {
  model::Model& m;
  const std::vector<mir::Program>& corpus;
  const PretrainConfig& cfg;
  Adam opt;
  Rng dropout_rng;

  Trainer(model::Model& model, const std::vector<mir::Program>& c,
          const PretrainConfig& config)
      : m(model), corpus(c), cfg(config), opt(config.lr),
        dropout_rng(Rng::seeded(config.seed).fork(1)) {
    config.validate();
    if (c.empty())
      throw std::invalid_argument("pre-training corpus is empty");
  }

  void add_params(const std::vector<std::pair<std::string, Tensor>>& named) {
    for (const auto& [name, t] : named) opt.add(name, t);
  }
};

// an architecture whose edge table went unused this step (all subgraphs
// edgeless) legitimately has a zero gradient; materialize it
void ensure_grads(const std::vector<std::pair<std::string, Tensor>>& named) {
  for (const auto& [name, t] : named) {
    Tensor tt = t;
    tt.grad();
  }
}

}  // namespace

PretrainResult pretrain_node_classification(
    model::Model& m, const std::vector<mir::Program>& corpus,
    const PretrainConfig& cfg) {
  Trainer tr(m, corpus, cfg);
  Rng init = Rng::seeded(cfg.seed).fork(2);
  NodeClassHead head = NodeClassHead::init(m.width(), init);
  std::vector<std::pair<std::string, Tensor>> named;
  m.collect_encoder(named);
  head.collect(named);
  tr.add_params(named);

  PretrainResult res;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& p : corpus) {
      Tape tape;
      double item = 0.0;
      {
        TapeScope scope(tape);
        auto g = depgraph::build_program_graph(p, m.lex);
        Tensor loss = node_classification_loss(m.stack, head, g, g.X, g.kinds,
                                               &tr.dropout_rng);
        item = loss.item();
        backward(loss, tape);
      }
      total += item;
      tr.opt.step();
    }
    res.epoch_loss.push_back(total / static_cast<double>(corpus.size()));

    std::int64_t correct_n = 0, total_n = 0;
    for (const auto& p : corpus) {
      auto g = depgraph::build_program_graph(p, m.lex);
      double acc = 0.0;
      node_classification_loss(m.stack, head, g, g.X, g.kinds, nullptr, &acc);
      std::int64_t instr = 0;
      for (const auto& k : g.kinds)
        if (k) ++instr;
      correct_n += static_cast<std::int64_t>(std::round(acc * static_cast<double>(instr)));
      total_n += instr;
    }
    res.epoch_accuracy.push_back(static_cast<double>(correct_n) /
                                 static_cast<double>(total_n));
  }
  m.provenance = strategy_name(Strategy::Node);
  return res;
}

PretrainResult pretrain_context_prediction(
    model::Model& m, const std::vector<mir::Program>& corpus,
    const PretrainConfig& cfg) {
  Trainer tr(m, corpus, cfg);
  Rng init = Rng::seeded(cfg.seed).fork(2);
  Rng pick = Rng::seeded(cfg.seed).fork(3);
  gnn::GnnStack m_c = gnn::GnnStack::init(
      m.arch, m.width(), static_cast<std::int64_t>(m.stack.layers.size()),
      init, m.dropout);
  std::vector<std::pair<std::string, Tensor>> named, ctx_named;
  m.collect_encoder(named);
  m_c.collect(ctx_named, "context");
  named.insert(named.end(), ctx_named.begin(), ctx_named.end());
  tr.add_params(named);

  PretrainResult res;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::int64_t counted = 0;
    for (const auto& p : corpus) {
      Tape tape;
      bool stepped = false;
      double item = 0.0;
      {
        TapeScope scope(tape);
        auto g = depgraph::build_program_graph(p, m.lex);
        Tensor loss = context_prediction_loss(m.stack, m_c, g, g.X, cfg, pick,
                                              &res.skipped_anchors,
                                              &tr.dropout_rng);
        if (loss.defined()) {
          item = loss.item();
          backward(loss, tape);
          stepped = true;
        }
      }
      if (stepped) {
        ensure_grads(named);
        tr.opt.step();
        total += item;
        ++counted;
      }
    }
    res.epoch_loss.push_back(counted ? total / static_cast<double>(counted)
                                     : 0.0);
  }
  m.provenance = strategy_name(Strategy::Context);
  return res;
}

PretrainResult pretrain_vgae(model::Model& m,
                             const std::vector<mir::Program>& corpus,
                             const PretrainConfig& cfg) {
  Trainer tr(m, corpus, cfg);
  Rng init = Rng::seeded(cfg.seed).fork(2);
  Rng noise = Rng::seeded(cfg.seed).fork(4);
  VgaeHeads heads = VgaeHeads::init(m.width(), init);
  std::vector<std::pair<std::string, Tensor>> named;
  m.collect_encoder(named);
  heads.collect(named);
  tr.add_params(named);

  PretrainResult res;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& p : corpus) {
      Tape tape;
      double item = 0.0;
      {
        TapeScope scope(tape);
        auto g = depgraph::build_program_graph(p, m.lex);
        bool kl_only = false;
        Tensor loss =
            vgae_loss(m.stack, heads, g, g.X, noise, nullptr, &kl_only,
                      &tr.dropout_rng);
        if (kl_only) ++res.kl_only_graphs;
        item = loss.item();
        backward(loss, tape);
      }
      ensure_grads(named);
      tr.opt.step();
      total += item;
    }
    res.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
  }
  m.provenance = strategy_name(Strategy::Vgae);
  return res;
}

PretrainResult pretrain(model::Model& m, const std::vector<mir::Program>& corpus,
                        const PretrainConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::Node: return pretrain_node_classification(m, corpus, cfg);
    case Strategy::Context: return pretrain_context_prediction(m, corpus, cfg);
    case Strategy::Vgae: return pretrain_vgae(m, corpus, cfg);
  }
  throw std::logic_error("unreachable");
}

}  // namespace depvec::pretrain
