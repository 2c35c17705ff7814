#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "depvec/gnn.hpp"
#include "test_util.hpp"

using namespace depvec;
using namespace depvec::gnn;
using depgraph::Edge;
using depgraph::EdgeType;

namespace {

Tensor identity(std::int64_t d) {
  std::vector<double> v(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t i = 0; i < d; ++i) v[static_cast<std::size_t>(i * d + i)] = 1.0;
  return Tensor::from({d, d}, v);
}

void push_pair(std::vector<Edge>& edges, std::int64_t s, std::int64_t t,
               EdgeType type) {
  edges.push_back({s, t, type, false});
  edges.push_back({t, s, type, true});
}

// random connected graph with mirrored edges, 4..8 nodes
std::vector<Edge> random_edges(Rng& rng, std::int64_t n) {
  std::vector<Edge> edges;
  for (std::int64_t i = 1; i < n; ++i) {
    auto s = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(i)));
    auto t = static_cast<EdgeType>(rng.uniform_int(4));
    push_pair(edges, s, i, t);
  }
  for (int extra = 0; extra < 2; ++extra) {
    auto s = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    auto d = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (s == d) continue;
    push_pair(edges, s, d, static_cast<EdgeType>(rng.uniform_int(4)));
  }
  return edges;
}

lexical::LexModel tiny_model(std::uint64_t seed, std::int64_t hidden) {
  Rng rng = Rng::seeded(seed);
  lexical::LexModel m;
  m.vocab = lexical::train_bpe(
      {"a b c d e f g h i j k l m n o p q r s t u v w x y z 0 1 2 3 "
       "= + - * / % < > ( ) , if goto return call"},
      64);
  m.E = Tensor::param({m.vocab.size(), 8}, rng, -0.5, 0.5);
  m.net = lexical::BiLstm::init(8, hidden, rng);
  return m;
}

}  // namespace

TEST_CASE("architecture names") {
  for (Arch a : {Arch::Gcn, Arch::Gin, Arch::Sage, Arch::Gat})
    CHECK(arch_from_name(arch_name(a)) == a);
  CHECK_THROWS_AS(arch_from_name("vgae"), std::invalid_argument);
}

TEST_CASE("single-node message passing") {
  const std::int64_t d = 3;
  std::vector<Edge> none;
  GraphRef g(1, none);
  Tensor x = Tensor::from({1, d}, {0.5, 1.25, 2.0});

  SUBCASE("gcn with identity weights reduces to relu") {
    GnnLayer l;
    l.arch = Arch::Gcn;
    l.T = Tensor::zeros({5, d});
    l.W = identity(d);
    Tensor out = message_pass(l, g, x);
    for (std::int64_t j = 0; j < d; ++j) CHECK(out.data()[j] == x.data()[j]);
  }
  SUBCASE("gin with identity mlp passes features through") {
    GnnLayer l;
    l.arch = Arch::Gin;
    l.T = Tensor::zeros({5, d});
    l.eps = Tensor::from({1}, {0.0});
    l.W1 = identity(d);
    l.b1 = Tensor::zeros({1, d});
    l.W2 = identity(d);
    l.b2 = Tensor::zeros({1, d});
    Tensor out = message_pass(l, g, x);
    for (std::int64_t j = 0; j < d; ++j) CHECK(out.data()[j] == x.data()[j]);
  }
  SUBCASE("gat attends only to itself") {
    Rng rng = Rng::seeded(7);
    GnnLayer l = GnnLayer::init(Arch::Gat, d, d, rng);
    Tensor out = message_pass(l, g, x);
    Tensor expect = matmul(x, l.W);
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(out.data()[j] == doctest::Approx(expect.data()[j]).epsilon(1e-12));
    auto att = gat_attention(l, g, x);
    CHECK(att.alpha.shape() == Shape{1, 1});
    CHECK(att.alpha.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gcn normalizes by both endpoint degrees") {
  const std::int64_t d = 2;
  std::vector<Edge> edges;
  push_pair(edges, 0, 1, EdgeType::Data);
  GraphRef g(2, edges);
  Tensor H = Tensor::from({2, d}, {1.0, 2.0, 3.0, 5.0});
  std::vector<double> tv(5 * d, 0.0);
  tv[static_cast<std::size_t>(1 * d + 0)] = 0.25;  // DATA row
  tv[static_cast<std::size_t>(1 * d + 1)] = -0.5;
  tv[static_cast<std::size_t>(4 * d + 0)] = 0.125;  // direction offset row
  tv[static_cast<std::size_t>(4 * d + 1)] = 0.0625;
  GnnLayer l;
  l.arch = Arch::Gcn;
  l.T = Tensor::from({5, d}, tv);
  l.W = identity(d);
  Tensor out = message_pass(l, g, H);
  // deg 1 both sides: self term /2, neighbor term /sqrt(2*2)
  const double e10 = (3.0 / 2.0) + (1.0 + 0.25) / 2.0;
  const double e11 = (5.0 / 2.0) + (2.0 - 0.5) / 2.0;
  const double e00 = (1.0 / 2.0) + (3.0 + 0.25 + 0.125) / 2.0;
  const double e01 = (2.0 / 2.0) + (5.0 - 0.5 + 0.0625) / 2.0;
  CHECK(out.data()[2] == doctest::Approx(e10).epsilon(1e-15));
  CHECK(out.data()[3] == doctest::Approx(e11).epsilon(1e-15));
  CHECK(out.data()[0] == doctest::Approx(e00).epsilon(1e-15));
  CHECK(out.data()[1] == doctest::Approx(e01).epsilon(1e-15));
}

TEST_CASE("gat attention") {
  Rng rng = Rng::seeded(11);
  const std::int64_t n = 6, d = 4;
  std::vector<Edge> edges = random_edges(rng, n);
  GraphRef g(n, edges);
  Tensor H = Tensor::param({n, d}, rng, -1.0, 1.0);

  SUBCASE("rows sum to one") {
    GnnLayer l = GnnLayer::init(Arch::Gat, d, d, rng);
    auto att = gat_attention(l, g, H);
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    for (std::size_t i = 0; i < att.dst.size(); ++i)
      sums[static_cast<std::size_t>(att.dst[i])] +=
          att.alpha.data()[static_cast<std::int64_t>(i)];
    for (auto s : sums) CHECK(std::fabs(s - 1.0) < 1e-12);
  }
  SUBCASE("zero attention vector gives uniform weights") {
    GnnLayer l = GnnLayer::init(Arch::Gat, d, d, rng);
    l.a = Tensor::zeros({2 * d, 1});
    auto att = gat_attention(l, g, H);
    std::vector<double> count(static_cast<std::size_t>(n), 0.0);
    for (auto v : att.dst) count[static_cast<std::size_t>(v)] += 1.0;
    for (std::size_t i = 0; i < att.dst.size(); ++i)
      CHECK(att.alpha.data()[static_cast<std::int64_t>(i)] ==
            doctest::Approx(1.0 / count[static_cast<std::size_t>(att.dst[i])])
                .epsilon(1e-12));
  }
  SUBCASE("non-gat layer is rejected") {
    GnnLayer l = GnnLayer::init(Arch::Gcn, d, d, rng);
    CHECK_THROWS_AS(gat_attention(l, g, H), std::invalid_argument);
  }
}

TEST_CASE("message passing is permutation equivariant bitwise") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CAPTURE(seed);
    Rng rng = Rng::seeded(seed);
    const std::int64_t n = 5, d = 4;
    std::vector<Edge> edges = random_edges(rng, n);
    Tensor H = Tensor::param({n, d}, rng, -1.0, 1.0);

    // reversal permutation
    std::vector<std::int64_t> pi(static_cast<std::size_t>(n));
    for (std::int64_t v = 0; v < n; ++v)
      pi[static_cast<std::size_t>(v)] = n - 1 - v;
    std::vector<Edge> pedges = edges;
    for (auto& e : pedges) {
      e.src = pi[static_cast<std::size_t>(e.src)];
      e.dst = pi[static_cast<std::size_t>(e.dst)];
    }
    std::vector<double> ph(static_cast<std::size_t>(n * d));
    for (std::int64_t v = 0; v < n; ++v)
      for (std::int64_t j = 0; j < d; ++j)
        ph[static_cast<std::size_t>(pi[static_cast<std::size_t>(v)] * d + j)] =
            H.data()[v * d + j];
    Tensor HP = Tensor::from({n, d}, ph);

    for (Arch arch : {Arch::Gcn, Arch::Gin, Arch::Sage, Arch::Gat}) {
      CAPTURE(arch_name(arch));
      Rng lr = Rng::seeded(seed + 100);
      GnnLayer l = GnnLayer::init(arch, d, d, lr);
      Tensor out = message_pass(l, GraphRef(n, edges), H);
      Tensor pout = message_pass(l, GraphRef(n, pedges), HP);
      for (std::int64_t v = 0; v < n; ++v)
        for (std::int64_t j = 0; j < d; ++j)
          CHECK(pout.data()[pi[static_cast<std::size_t>(v)] * d + j] ==
                out.data()[v * d + j]);
    }
  }
}

TEST_CASE("edge types and direction change the message") {
  Rng rng = Rng::seeded(21);
  const std::int64_t d = 3;
  GnnLayer l = GnnLayer::init(Arch::Gin, d, d, rng);
  Tensor H = Tensor::param({2, d}, rng, -1.0, 1.0);
  std::vector<Edge> e1, e2;
  push_pair(e1, 0, 1, EdgeType::Control);
  push_pair(e2, 0, 1, EdgeType::Data);
  Tensor o1 = message_pass(l, GraphRef(2, e1), H);
  Tensor o2 = message_pass(l, GraphRef(2, e2), H);
  bool differ = false;
  for (std::int64_t i = 0; i < o1.size(); ++i)
    if (o1.data()[i] != o2.data()[i]) differ = true;
  CHECK(differ);

  // mirrored edge carries the direction offset: messages 0->1 and 1->0 differ
  Tensor same = Tensor::from({2, d}, {0.3, -0.2, 0.7, 0.3, -0.2, 0.7});
  Tensor o3 = message_pass(l, GraphRef(2, e1), same);
  bool rows_differ = false;
  for (std::int64_t j = 0; j < d; ++j)
    if (o3.data()[j] != o3.data()[d + j]) rows_differ = true;
  CHECK(rows_differ);
}

TEST_CASE("stack construction and encoding") {
  Rng rng = Rng::seeded(5);
  CHECK_THROWS_AS(GnnStack::init(Arch::Gat, 4, 0, rng), std::invalid_argument);

  const std::int64_t n = 4, d = 4;
  std::vector<Edge> edges = random_edges(rng, n);
  Tensor X = Tensor::param({n, d}, rng, -1.0, 1.0);

  SUBCASE("one layer equals a direct call") {
    GnnStack s = GnnStack::init(Arch::Sage, d, 1, rng);
    Tensor a = s.encode(GraphRef(n, edges), X);
    Tensor b = message_pass(s.layers[0], GraphRef(n, edges), X);
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(),
                      sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
  SUBCASE("width mismatch is reported") {
    GnnStack s = GnnStack::init(Arch::Gcn, d + 1, 1, rng);
    CHECK_THROWS_AS(s.encode(GraphRef(n, edges), X), ShapeError);
    GnnStack s2 = GnnStack::init(Arch::Gcn, d, 1, rng);
    CHECK_THROWS_AS(s2.encode(GraphRef(0, edges), X), std::invalid_argument);
  }
  SUBCASE("default configuration") {
    GnnStack s = GnnStack::init(Arch::Gat, 8, 5, rng);
    CHECK(s.layers.size() == 5);
    for (const auto& l : s.layers) {
      CHECK(l.dropout == 0.2);
      CHECK(l.in_dim() == 8);
      CHECK(l.out_dim() == 8);
      CHECK(l.T.shape() == Shape{5, 8});
    }
    std::vector<std::pair<std::string, Tensor>> params;
    s.collect(params);
    CHECK(params.size() == 5 * 3);
    CHECK(params[0].first == "gnn.layer0.T");
    CHECK(params[2].first == "gnn.layer0.a");
  }
  SUBCASE("dropout only runs in training mode") {
    GnnStack s = GnnStack::init(Arch::Gin, d, 2, rng);
    Tensor a = s.encode(GraphRef(n, edges), X);
    Tensor b = s.encode(GraphRef(n, edges), X);
    CHECK(std::memcmp(a.data(), b.data(),
                      sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
    Rng dr = Rng::seeded(99);
    Tensor c = s.encode(GraphRef(n, edges), X, &dr);
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < c.size(); ++i)
      if (c.data()[i] == 0.0) ++zeros;
    CHECK(zeros > 0);
  }
}

TEST_CASE("gradients match finite differences for every architecture") {
  for (Arch arch : {Arch::Gcn, Arch::Gin, Arch::Sage, Arch::Gat}) {
    CAPTURE(arch_name(arch));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      Rng rng = Rng::seeded(seed * 13 + 1);
      const std::int64_t n = 4 + static_cast<std::int64_t>(rng.uniform_int(5));
      const std::int64_t d = 3;
      std::vector<Edge> edges = random_edges(rng, n);
      GraphRef g(n, edges);
      Tensor X = Tensor::param({n, d}, rng, -1.0, 1.0);
      GnnStack stack = GnnStack::init(arch, d, 2, rng);
      Readout ro = Readout::init(d, d, rng);

      std::vector<std::pair<std::string, Tensor>> named;
      stack.collect(named);
      ro.collect(named);
      std::vector<Tensor> params = {X};
      for (auto& [name, t] : named) params.push_back(t);

      auto loss_fn = [&]() {
        return sum(attention_readout(ro, stack.encode(g, X)));
      };
      testutil::check_grads(loss_fn, params, 2e-4);
    }
  }
}

TEST_CASE("attention readout") {
  Rng rng = Rng::seeded(17);
  const std::int64_t d = 4;

  SUBCASE("single node") {
    Readout r = Readout::init(d, d, rng);
    Tensor H = Tensor::param({1, d}, rng, -1.0, 1.0);
    Tensor out = attention_readout(r, H);
    double dot = 0.0;
    for (std::int64_t j = 0; j < d; ++j)
      dot += H.data()[j] * r.wg.data()[j];
    const double gate = 1.0 / (1.0 + std::exp(-(dot + r.bg.data()[0])));
    Tensor t = matmul(H, r.Wt);
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(out.data()[j] == doctest::Approx(gate * t.data()[j]).epsilon(1e-12));
  }
  SUBCASE("zero gate weights halve the transformed sum") {
    Readout r;
    r.wg = Tensor::zeros({d, 1});
    r.bg = Tensor::zeros({1});
    r.Wt = Tensor::param({d, d}, rng, -1.0, 1.0);
    Tensor H = Tensor::param({5, d}, rng, -1.0, 1.0);
    Tensor out = attention_readout(r, H);
    Tensor colsum = sum(matmul(H, r.Wt), 0);
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(out.data()[j] ==
            doctest::Approx(0.5 * colsum.data()[j]).epsilon(1e-12));
  }
  SUBCASE("permuting node rows is bit-exact invariant") {
    Readout r = Readout::init(d, 3, rng);
    Tensor H = Tensor::param({6, d}, rng, -1.0, 1.0);
    std::vector<std::int64_t> perm = {4, 0, 5, 2, 1, 3};
    Tensor HP = gather_rows(H, perm);
    Tensor a = attention_readout(r, H);
    Tensor b = attention_readout(r, HP);
    CHECK(std::memcmp(a.data(), b.data(),
                      sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
}

TEST_CASE("code embedding") {
  lexical::LexModel lex = tiny_model(23, 5);  // X width 10
  Rng rng = Rng::seeded(29);
  GnnStack stack = GnnStack::init(Arch::Gat, 10, 2, rng);
  Readout ro = Readout::init(10, 10, rng);

  mir::Program p = mir::parse_program(
      "method helper(v){ w = v * 2; return w; } "
      "method main(x,y){ s = x + y; t = call helper(s); return t; }");

  Tensor pe = code_embedding(p, lex, stack, ro);
  CHECK(pe.shape() == Shape{1, 20});
  Tensor pe2 = code_embedding(p, lex, stack, ro);
  CHECK(std::memcmp(pe.data(), pe2.data(),
                    sizeof(double) * static_cast<std::size_t>(pe.size())) == 0);

  Tensor me = code_embedding(p.methods[0], lex, stack, ro);
  CHECK(me.shape() == Shape{1, 20});
  for (std::int64_t i = 0; i < pe.size(); ++i) CHECK(std::isfinite(pe.data()[i]));

  // first half is exactly the lexical embedding
  Tensor lv = lexical::lexical_embedding(lex, p);
  for (std::int64_t j = 0; j < 10; ++j) CHECK(pe.data()[j] == lv.data()[j]);
}
