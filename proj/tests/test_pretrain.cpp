#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "depvec/adam.hpp"
#include "depvec/pretrain.hpp"
#include "test_util.hpp"

using namespace depvec;
using namespace depvec::pretrain;
using depgraph::Edge;
using depgraph::EdgeType;

namespace {

void push_pair(std::vector<Edge>& edges, std::int64_t s, std::int64_t t,
               EdgeType type = EdgeType::Data) {
  edges.push_back({s, t, type, false});
  edges.push_back({t, s, type, true});
}

// all-pairs shortest paths, independent of the BFS under test
std::vector<std::vector<std::int64_t>> floyd_warshall(gnn::GraphRef g) {
  const std::int64_t n = g.n_nodes;
  const std::int64_t inf = 1 << 20;
  std::vector<std::vector<std::int64_t>> d(
      static_cast<std::size_t>(n),
      std::vector<std::int64_t>(static_cast<std::size_t>(n), inf));
  for (std::int64_t v = 0; v < n; ++v) d[v][v] = 0;
  for (const auto& e : *g.edges) d[e.src][e.dst] = 1;
  for (std::int64_t k = 0; k < n; ++k)
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  for (auto& row : d)
    for (auto& v : row)
      if (v >= inf) v = -1;
  return d;
}

model::Model tiny_model(std::uint64_t seed, gnn::Arch arch,
                        std::int64_t layers) {
  Rng rng = Rng::seeded(seed);
  auto vocab = lexical::train_bpe(
      {"a b c d e f g h i j k l m n o p q r s t u v w x y z 0 1 2 3 "
       "= + - * / % < > ( ) , if goto return call"},
      64);
  Tensor E = Tensor::param({vocab.size(), 6}, rng, -0.5, 0.5);
  return model::make_model(std::move(vocab), E, arch, layers, 4, 8, 0.2, rng);
}

std::vector<mir::Program> tiny_corpus() {
  return {
      mir::parse_program("method f(a,b){ r = a + b; return r; }"),
      mir::parse_program(
          "method g(n){ i = 0; L: if i > n goto E; i = i + 1; goto L; "
          "E: return i; }"),
      mir::parse_program(
          "method h(v){ w = v * 2; return w; } "
          "method main(x){ y = call h(x); return y; }"),
  };
}

}  // namespace

TEST_CASE("config validation") {
  PretrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  PretrainConfig bad = cfg;
  bad.r1 = 2;  // r1 == k
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.r2 = 1;  // r1 == r2
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(strategy_from_name("context") == Strategy::Context);
  CHECK(strategy_from_name(strategy_name(Strategy::Vgae)) == Strategy::Vgae);
  CHECK_THROWS_AS(strategy_from_name("gae"), std::invalid_argument);
}

TEST_CASE("hop distances and subgraphs match a brute-force oracle") {
  std::vector<mir::Program> corpus = tiny_corpus();
  for (const auto& p : corpus) {
    for (const auto& m : p.methods) {
      auto mg = depgraph::build_method_graph(m);
      gnn::GraphRef g(mg);
      REQUIRE(g.n_nodes <= 10);
      auto fw = floyd_warshall(g);
      for (std::int64_t anchor = 0; anchor < g.n_nodes; ++anchor) {
        CAPTURE(p.name);
        CAPTURE(anchor);
        auto bfs = hop_distances(g, anchor);
        for (std::int64_t v = 0; v < g.n_nodes; ++v)
          CHECK(bfs[static_cast<std::size_t>(v)] == fw[anchor][v]);
        for (std::int64_t k = 1; k <= 3; ++k) {
          auto nb = neighborhood_subgraph(g, anchor, k);
          std::set<std::int64_t> expect;
          for (std::int64_t v = 0; v < g.n_nodes; ++v)
            if (fw[anchor][v] >= 0 && fw[anchor][v] <= k) expect.insert(v);
          CHECK(std::set<std::int64_t>(nb.nodes.begin(), nb.nodes.end()) ==
                expect);
          CHECK(nb.nodes[static_cast<std::size_t>(nb.anchor_pos)] == anchor);
        }
        for (auto [r1, r2] : std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {2, 3}}) {
          auto ring = ring_subgraph(g, anchor, r1, r2);
          std::set<std::int64_t> expect;
          for (std::int64_t v = 0; v < g.n_nodes; ++v)
            if (fw[anchor][v] >= r1 && fw[anchor][v] <= r2) expect.insert(v);
          CHECK(std::set<std::int64_t>(ring.nodes.begin(), ring.nodes.end()) ==
                expect);
          CHECK(ring.anchor_pos == -1);
        }
      }
    }
  }
}

TEST_CASE("subgraph extraction details") {
  SUBCASE("single-edge graph: each node's ring is the other node") {
    std::vector<Edge> edges;
    push_pair(edges, 0, 1);
    gnn::GraphRef g(2, edges);
    auto r0 = ring_subgraph(g, 0, 1, 3);
    auto r1 = ring_subgraph(g, 1, 1, 3);
    CHECK(r0.nodes == std::vector<std::int64_t>{1});
    CHECK(r1.nodes == std::vector<std::int64_t>{0});
    CHECK(r0.edges.empty());
  }
  SUBCASE("path graph: ring of an endpoint is the next three nodes") {
    std::vector<Edge> edges;
    for (std::int64_t i = 0; i + 1 < 5; ++i) push_pair(edges, i, i + 1);
    gnn::GraphRef g(5, edges);
    auto ring = ring_subgraph(g, 0, 1, 3);
    CHECK(ring.nodes == std::vector<std::int64_t>{1, 2, 3});
    // induced edges keep list order and the mirror flag
    REQUIRE(ring.edges.size() == 4);  // 1-2 and 2-3, each mirrored
    CHECK(ring.edges[0] == Edge{0, 1, EdgeType::Data, false});
    CHECK(ring.edges[1] == Edge{1, 0, EdgeType::Data, true});
    CHECK(ring.edges[2] == Edge{1, 2, EdgeType::Data, false});
  }
  SUBCASE("neighborhood carries the anchor position") {
    std::vector<Edge> edges;
    for (std::int64_t i = 0; i + 1 < 5; ++i) push_pair(edges, i, i + 1);
    gnn::GraphRef g(5, edges);
    auto nb = neighborhood_subgraph(g, 2, 1);
    CHECK(nb.nodes == std::vector<std::int64_t>{1, 2, 3});
    CHECK(nb.anchor_pos == 1);
  }
}

TEST_CASE("node classification loss") {
  SUBCASE("uniform prediction costs ln 7") {
    model::Model m = tiny_model(1, gnn::Arch::Gcn, 1);
    NodeClassHead head;
    head.W = Tensor::zeros({m.width(), 7});
    head.b = Tensor::zeros({1, 7});
    auto p = mir::parse_program("method f(a){ b = a + 1; return b; }");
    auto g = depgraph::build_program_graph(p, m.lex);
    Tensor loss =
        node_classification_loss(m.stack, head, g, g.X, g.kinds);
    CHECK(loss.item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  }
  SUBCASE("gradients match finite differences on a 3-node graph") {
    model::Model m = tiny_model(2, gnn::Arch::Gat, 1);
    auto p = mir::parse_program("method id(x){ return x; }");
    auto g = depgraph::build_program_graph(p, m.lex);
    REQUIRE(g.n_nodes == 3);
    Tensor X = g.X;  // built outside any tape: constant features
    Rng hr = Rng::seeded(9);
    NodeClassHead head = NodeClassHead::init(m.width(), hr);
    std::vector<std::pair<std::string, Tensor>> named;
    m.stack.collect(named);
    head.collect(named);
    std::vector<Tensor> params;
    for (auto& [n, t] : named) params.push_back(t);
    auto loss_fn = [&]() {
      return node_classification_loss(m.stack, head, gnn::GraphRef(g), X,
                                      g.kinds);
    };
    testutil::check_grads(loss_fn, params, 2e-4);
  }
  SUBCASE("one-instruction corpus reaches training accuracy 1.0") {
    model::Model m = tiny_model(3, gnn::Arch::Sage, 1);
    std::vector<mir::Program> corpus = {
        mir::parse_program("method f(){ return 0; }")};
    PretrainConfig cfg;
    cfg.strategy = Strategy::Node;
    cfg.epochs = 200;
    cfg.seed = 4;
    auto res = pretrain_node_classification(m, corpus, cfg);
    CHECK(res.epoch_accuracy.back() == 1.0);
    CHECK(res.epoch_loss.back() < res.epoch_loss.front());
    CHECK(m.provenance == "node");
  }
  SUBCASE("empty corpus is rejected") {
    model::Model m = tiny_model(4, gnn::Arch::Gcn, 1);
    PretrainConfig cfg;
    CHECK_THROWS_AS(pretrain_node_classification(m, {}, cfg),
                    std::invalid_argument);
  }
}

TEST_CASE("context prediction loss") {
  SUBCASE("zero encoders give 2 ln 2 per anchor") {
    model::Model m = tiny_model(5, gnn::Arch::Gcn, 1);
    gnn::GnnStack zs;
    gnn::GnnLayer zl;
    zl.arch = gnn::Arch::Gcn;
    zl.T = Tensor::zeros({5, m.width()});
    zl.W = Tensor::zeros({m.width(), m.width()});
    zs.layers = {zl};
    auto p = mir::parse_program("method f(a){ b = a + 1; return b; }");
    auto g = depgraph::build_program_graph(p, m.lex);
    PretrainConfig cfg;
    Rng pick = Rng::seeded(6);
    std::int64_t skipped = 0;
    Tensor loss =
        context_prediction_loss(zs, zs, g, g.X, cfg, pick, &skipped);
    REQUIRE(loss.defined());
    const auto anchors = static_cast<double>(g.n_nodes - skipped);
    CHECK(loss.item() ==
          doctest::Approx(anchors * 2.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("isolated node is skipped and counted") {
    model::Model m = tiny_model(7, gnn::Arch::Gin, 1);
    std::vector<Edge> edges;
    push_pair(edges, 0, 1);
    gnn::GraphRef g(3, edges);  // node 2 isolated
    Rng xr = Rng::seeded(8);
    Tensor X = Tensor::param({3, m.width()}, xr, -1.0, 1.0);
    PretrainConfig cfg;
    Rng pick = Rng::seeded(9);
    std::int64_t skipped = 0;
    Tensor loss =
        context_prediction_loss(m.stack, m.stack, g, X, cfg, pick, &skipped);
    CHECK(loss.defined());
    CHECK(skipped == 1);
  }
  SUBCASE("no usable anchor yields an undefined loss") {
    model::Model m = tiny_model(7, gnn::Arch::Gcn, 1);
    std::vector<Edge> none;
    gnn::GraphRef g(2, none);
    Rng xr = Rng::seeded(1);
    Tensor X = Tensor::param({2, m.width()}, xr, -1.0, 1.0);
    PretrainConfig cfg;
    Rng pick = Rng::seeded(2);
    std::int64_t skipped = 0;
    Tensor loss =
        context_prediction_loss(m.stack, m.stack, g, X, cfg, pick, &skipped);
    CHECK(!loss.defined());
    CHECK(skipped == 2);
  }
  SUBCASE("gradients match finite differences") {
    model::Model m = tiny_model(10, gnn::Arch::Gat, 1);
    Rng ir = Rng::seeded(11);
    gnn::GnnStack m_c =
        gnn::GnnStack::init(gnn::Arch::Gat, m.width(), 1, ir, 0.2);
    auto p = mir::parse_program(
        "method f(a){ b = a + 1; c = b * 2; return c; }");
    auto g = depgraph::build_program_graph(p, m.lex);
    Tensor X = g.X;
    PretrainConfig cfg;
    std::vector<std::pair<std::string, Tensor>> named;
    m.stack.collect(named);
    m_c.collect(named, "context");
    std::vector<Tensor> params;
    for (auto& [n, t] : named) params.push_back(t);
    auto loss_fn = [&]() {
      Rng pick = Rng::seeded(12);
      return context_prediction_loss(m.stack, m_c, gnn::GraphRef(g), X, cfg,
                                     pick, nullptr);
    };
    testutil::check_grads(loss_fn, params, 2e-4);
  }
  SUBCASE("trainer runs and reports") {
    model::Model m = tiny_model(13, gnn::Arch::Gcn, 2);
    PretrainConfig cfg;
    cfg.strategy = Strategy::Context;
    cfg.epochs = 2;
    cfg.seed = 14;
    auto res = depvec::pretrain::pretrain(m, tiny_corpus(), cfg);
    CHECK(res.epoch_loss.size() == 2);
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
    CHECK(m.provenance == "context");
  }
}

TEST_CASE("vgae loss") {
  SUBCASE("single node contributes only kl, zero at standard normal") {
    model::Model m = tiny_model(15, gnn::Arch::Gcn, 1);
    VgaeHeads heads;
    heads.Wmu = Tensor::zeros({m.width(), m.width()});
    heads.bmu = Tensor::zeros({1, m.width()});
    heads.Wlv = Tensor::zeros({m.width(), m.width()});
    heads.blv = Tensor::zeros({1, m.width()});
    std::vector<Edge> none;
    gnn::GraphRef g(1, none);
    Rng xr = Rng::seeded(16);
    Tensor X = Tensor::param({1, m.width()}, xr, -1.0, 1.0);
    Rng noise = Rng::seeded(17);
    double bce = -1.0;
    bool kl_only = false;
    Tensor loss = vgae_loss(m.stack, heads, g, X, noise, &bce, &kl_only);
    CHECK(kl_only);
    CHECK(bce == 0.0);
    CHECK(loss.item() == 0.0);  // mu=0, logvar=0 exactly
  }
  SUBCASE("near-zero latents cost ln 2 per scored pair") {
    model::Model m = tiny_model(18, gnn::Arch::Gcn, 1);
    gnn::GnnStack zs;
    gnn::GnnLayer zl;
    zl.arch = gnn::Arch::Gcn;
    zl.T = Tensor::zeros({5, m.width()});
    zl.W = Tensor::zeros({m.width(), m.width()});
    zs.layers = {zl};
    VgaeHeads heads;
    heads.Wmu = Tensor::zeros({m.width(), m.width()});
    heads.bmu = Tensor::zeros({1, m.width()});
    heads.Wlv = Tensor::zeros({m.width(), m.width()});
    std::vector<double> bv(static_cast<std::size_t>(m.width()), -80.0);
    heads.blv = Tensor::from({1, m.width()}, bv);  // sigma ~ 4e-18
    std::vector<Edge> edges;
    push_pair(edges, 0, 1);
    push_pair(edges, 1, 2);
    gnn::GraphRef g(3, edges);
    Rng xr = Rng::seeded(19);
    Tensor X = Tensor::param({3, m.width()}, xr, -1.0, 1.0);
    Rng noise = Rng::seeded(20);
    double bce = -1.0;
    Tensor loss = vgae_loss(zs, heads, g, X, noise, &bce);
    CHECK(bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("reconstruction improves on a triangle") {
    model::Model m = tiny_model(21, gnn::Arch::Gin, 1);
    Rng hr = Rng::seeded(22);
    VgaeHeads heads = VgaeHeads::init(m.width(), hr);
    std::vector<Edge> edges;
    push_pair(edges, 0, 1);
    push_pair(edges, 1, 2);
    push_pair(edges, 0, 2);
    gnn::GraphRef g(3, edges);
    Rng xr = Rng::seeded(23);
    Tensor X = Tensor::param({3, m.width()}, xr, -1.0, 1.0);

    std::vector<std::pair<std::string, Tensor>> named;
    m.stack.collect(named);
    heads.collect(named);
    Adam opt(1e-2);
    for (auto& [n, t] : named) opt.add(n, t);

    double first = -1.0, last = -1.0;
    for (int step = 0; step < 50; ++step) {
      Rng noise = Rng::seeded(24);  // same draws each step
      Tape tape;
      double bce = 0.0;
      {
        TapeScope scope(tape);
        Tensor loss = vgae_loss(m.stack, heads, g, X, noise, &bce);
        backward(loss, tape);
      }
      if (step == 0) first = bce;
      last = bce;
      opt.step();
    }
    CHECK(last < first);
  }
  SUBCASE("gradients match finite differences") {
    model::Model m = tiny_model(25, gnn::Arch::Sage, 1);
    Rng hr = Rng::seeded(26);
    VgaeHeads heads = VgaeHeads::init(m.width(), hr);
    auto p = mir::parse_program("method f(a){ b = a + 1; return b; }");
    auto g = depgraph::build_program_graph(p, m.lex);
    Tensor X = g.X;
    std::vector<std::pair<std::string, Tensor>> named;
    m.stack.collect(named);
    heads.collect(named);
    std::vector<Tensor> params;
    for (auto& [n, t] : named) params.push_back(t);
    auto loss_fn = [&]() {
      Rng noise = Rng::seeded(27);
      return vgae_loss(m.stack, heads, gnn::GraphRef(g), X, noise);
    };
    testutil::check_grads(loss_fn, params, 2e-4);
  }
  SUBCASE("trainer runs over programs") {
    model::Model m = tiny_model(28, gnn::Arch::Gat, 1);
    PretrainConfig cfg;
    cfg.strategy = Strategy::Vgae;
    cfg.epochs = 2;
    cfg.seed = 29;
    auto res = depvec::pretrain::pretrain(m, tiny_corpus(), cfg);
    CHECK(res.epoch_loss.size() == 2);
    CHECK(res.kl_only_graphs == 0);
    CHECK(m.provenance == "vgae");
  }
}

TEST_CASE("checkpoint round trip") {
  model::Model m = tiny_model(30, gnn::Arch::Gat, 2);
  m.provenance = "context";

  SUBCASE("save, load, save is byte-identical") {
    const std::string t1 = model::save_checkpoint(m);
    model::Model m2 = model::load_checkpoint(t1);
    const std::string t2 = model::save_checkpoint(m2);
    CHECK(t1 == t2);
    CHECK(m2.provenance == "context");
    CHECK(m2.arch == gnn::Arch::Gat);
    CHECK(m2.stack.layers.size() == 2);
    CHECK(m2.lex.vocab.size() == m.lex.vocab.size());
  }
  SUBCASE("embeddings survive the round trip bit-exactly") {
    // fresh params are fp32-representable, so doubles match exactly
    model::Model m2 = model::load_checkpoint(model::save_checkpoint(m));
    auto p = mir::parse_program("method f(a,b){ r = a + b; return r; }");
    Tensor e1 = gnn::code_embedding(p, m.lex, m.stack, m.readout);
    Tensor e2 = gnn::code_embedding(p, m2.lex, m2.stack, m2.readout);
    REQUIRE(e1.shape() == e2.shape());
    CHECK(std::memcmp(e1.data(), e2.data(),
                      sizeof(double) * static_cast<std::size_t>(e1.size())) == 0);
  }
  SUBCASE("trained weights settle after one cast") {
    PretrainConfig cfg;
    cfg.strategy = Strategy::Node;
    cfg.epochs = 1;
    auto corpus = tiny_corpus();
    pretrain_node_classification(m, corpus, cfg);
    model::Model m2 = model::load_checkpoint(model::save_checkpoint(m));
    model::Model m3 = model::load_checkpoint(model::save_checkpoint(m2));
    auto p = corpus[0];
    Tensor e2 = gnn::code_embedding(p, m2.lex, m2.stack, m2.readout);
    Tensor e3 = gnn::code_embedding(p, m3.lex, m3.stack, m3.readout);
    CHECK(std::memcmp(e2.data(), e3.data(),
                      sizeof(double) * static_cast<std::size_t>(e2.size())) == 0);
  }
  SUBCASE("version errors") {
    std::string text = model::save_checkpoint(m);
    std::string v99 = text;
    v99.replace(0, 14, "DEPVEC-CKPT v99");
    CHECK_THROWS_WITH_AS(model::load_checkpoint(v99),
                         doctest::Contains("supported: DEPVEC-CKPT v1"),
                         model::CheckpointError);
    CHECK_THROWS_WITH_AS(model::load_checkpoint("hello\nworld\n"),
                         doctest::Contains("not a checkpoint"),
                         model::CheckpointError);
  }
  SUBCASE("truncation errors") {
    std::string text = model::save_checkpoint(m);
    CHECK_THROWS_WITH_AS(
        model::load_checkpoint(text.substr(0, text.size() / 2)),
        doctest::Contains("truncated"), model::CheckpointError);
    // cut a values line short
    auto pos = text.find("tensor lex.E");
    auto line_end = text.find('\n', pos);           // record line
    auto values_end = text.find('\n', line_end + 1);  // values line
    std::string cut = text.substr(0, line_end + 40) + "\n" +
                      text.substr(values_end + 1);
    CHECK_THROWS_WITH_AS(model::load_checkpoint(cut),
                         doctest::Contains("truncated"),
                         model::CheckpointError);
  }
  SUBCASE("shape mismatch is reported") {
    std::string text = model::save_checkpoint(m);
    auto pos = text.find("tensor lex.E 2 ");
    REQUIRE(pos != std::string::npos);
    std::string bad = text;
    bad.replace(pos, 15, "tensor lex.E 1 ");
    CHECK_THROWS_WITH_AS(model::load_checkpoint(bad),
                         doctest::Contains("shape mismatch"),
                         model::CheckpointError);
  }
  SUBCASE("file round trip") {
    const std::string path = "/tmp/depvec_test_ckpt.txt";
    model::save_checkpoint_file(m, path);
    model::Model m2 = model::load_checkpoint_file(path);
    CHECK(model::save_checkpoint(m2) == model::save_checkpoint(m));
    CHECK_THROWS_AS(model::load_checkpoint_file("/tmp/depvec_missing_ckpt"),
                    model::CheckpointError);
  }
}
