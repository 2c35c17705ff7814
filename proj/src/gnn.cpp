#include "depvec/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace depvec::gnn {

const char* arch_name(Arch arch) {
  switch (arch) {
    case Arch::Gcn: return "gcn";
    case Arch::Gin: return "gin";
    case Arch::Sage: return "sage";
    case Arch::Gat: return "gat";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  if (name == "gcn") return Arch::Gcn;
  if (name == "gin") return Arch::Gin;
  if (name == "sage") return Arch::Sage;
  if (name == "gat") return Arch::Gat;
  throw std::invalid_argument("unknown gnn architecture \"" + name +
                              "\" (want gcn, gin, sage, or gat)");
}

std::int64_t GnnLayer::out_dim() const {
  return arch == Arch::Gin ? W2.shape()[1] : W.shape()[1];
}

GnnLayer GnnLayer::init(Arch arch, std::int64_t d_in, std::int64_t d_out,
                        Rng& rng, double dropout) {
  GnnLayer l;
  l.arch = arch;
  l.dropout = dropout;
  const double si = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double so = 1.0 / std::sqrt(static_cast<double>(d_out));
  l.T = Tensor::param({5, d_in}, rng, -si, si);
  switch (arch) {
    case Arch::Gcn:
      l.W = Tensor::param({d_in, d_out}, rng, -si, si);
      break;
    case Arch::Gin:
      l.eps = Tensor::param({1}, rng, 0.0, 0.0);
      l.W1 = Tensor::param({d_in, d_out}, rng, -si, si);
      l.b1 = Tensor::param({1, d_out}, rng, -si, si);
      l.W2 = Tensor::param({d_out, d_out}, rng, -so, so);
      l.b2 = Tensor::param({1, d_out}, rng, -so, so);
      break;
    case Arch::Sage:
      l.W = Tensor::param({2 * d_in, d_out}, rng, -si, si);
      break;
    case Arch::Gat:
      l.W = Tensor::param({d_in, d_out}, rng, -si, si);
      l.a = Tensor::param({2 * d_out, 1}, rng, -so, so);
      break;
  }
  return l;
}

void GnnLayer::collect(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".T", T);
  switch (arch) {
    case Arch::Gcn:
    case Arch::Sage:
      out.emplace_back(prefix + ".W", W);
      break;
    case Arch::Gat:
      out.emplace_back(prefix + ".W", W);
      out.emplace_back(prefix + ".a", a);
      break;
    case Arch::Gin:
      out.emplace_back(prefix + ".eps", eps);
      out.emplace_back(prefix + ".W1", W1);
      out.emplace_back(prefix + ".b1", b1);
      out.emplace_back(prefix + ".W2", W2);
      out.emplace_back(prefix + ".b2", b2);
      break;
  }
}

namespace {

// edges regrouped as forward entries then mirrored entries; within each class
// the original edge-list order is kept, so aggregation order per node is a
// fixed function of the edge list and node relabeling stays bit-exact
struct EdgeBatch {
  std::vector<std::int64_t> src_f, dst_f, type_f;
  std::vector<std::int64_t> src_r, dst_r, type_r;
  std::vector<std::int64_t> dst_all;

  bool empty() const { return dst_all.empty(); }
  std::int64_t size() const {
    return static_cast<std::int64_t>(dst_all.size());
  }
};

EdgeBatch split_edges(GraphRef g) {
  EdgeBatch b;
  for (const auto& e : *g.edges) {
    if (e.reversed) {
      b.src_r.push_back(e.src);
      b.dst_r.push_back(e.dst);
      b.type_r.push_back(static_cast<std::int64_t>(e.type));
    } else {
      b.src_f.push_back(e.src);
      b.dst_f.push_back(e.dst);
      b.type_f.push_back(static_cast<std::int64_t>(e.type));
    }
  }
  b.dst_all = b.dst_f;
  b.dst_all.insert(b.dst_all.end(), b.dst_r.begin(), b.dst_r.end());
  return b;
}

// per-entry message H[src] + T[type], plus the direction offset row T[4] on
// mirrored entries
Tensor edge_messages(const Tensor& H, const Tensor& T, const EdgeBatch& b) {
  std::vector<Tensor> parts;
  if (!b.src_f.empty())
    parts.push_back(add(gather_rows(H, b.src_f), gather_rows(T, b.type_f)));
  if (!b.src_r.empty())
    parts.push_back(add(add(gather_rows(H, b.src_r), gather_rows(T, b.type_r)),
                        slice(T, 0, 4, 5)));
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

std::vector<double> in_degrees(const EdgeBatch& b, std::int64_t n) {
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (auto d : b.dst_all) deg[static_cast<std::size_t>(d)] += 1.0;
  return deg;
}

struct GatCore {
  Tensor alpha;  // {n + E, 1}
  Tensor V;      // transformed entry values W*m, self rows first
  std::vector<std::int64_t> dst;
};

GatCore gat_core(const GnnLayer& layer, GraphRef g, const Tensor& H) {
  const std::int64_t n = g.n_nodes;
  EdgeBatch eb = split_edges(g);

  Tensor WH = matmul(H, layer.W);
  Tensor V = WH;
  if (!eb.empty())
    V = concat({WH, matmul(edge_messages(H, layer.T, eb), layer.W)}, 0);

  std::vector<std::int64_t> dst(static_cast<std::size_t>(n));
  std::iota(dst.begin(), dst.end(), 0);
  dst.insert(dst.end(), eb.dst_all.begin(), eb.dst_all.end());

  Tensor pairs = concat({gather_rows(WH, dst), V}, 1);
  Tensor scores = leaky_relu(matmul(pairs, layer.a), 0.2);

  // per-group max as a constant shift; alpha is invariant to it, so treating
  // it as non-differentiable keeps the gradient exact
  const std::int64_t m = scores.shape()[0];
  std::vector<double> gmax(static_cast<std::size_t>(n),
                           -std::numeric_limits<double>::infinity());
  for (std::int64_t i = 0; i < m; ++i) {
    double& cur = gmax[static_cast<std::size_t>(dst[static_cast<std::size_t>(i)])];
    cur = std::max(cur, scores.data()[i]);
  }
  std::vector<double> shift(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i)
    shift[static_cast<std::size_t>(i)] =
        gmax[static_cast<std::size_t>(dst[static_cast<std::size_t>(i)])];

  Tensor shifted = sub(scores, Tensor::from({m, 1}, shift));
  Tensor expd = exp(shifted);
  Tensor logz = log(scatter_add_rows(expd, dst, n));
  Tensor alpha = exp(sub(shifted, gather_rows(logz, dst)));
  return {alpha, V, dst};
}

}  // namespace

Tensor message_pass(const GnnLayer& layer, GraphRef g, const Tensor& H,
                    Rng* dropout_rng) {
  if (H.rank() != 2 || H.shape()[0] != g.n_nodes)
    throw ShapeError("message_pass: feature matrix must have one row per node");
  if (H.shape()[1] != layer.in_dim())
    throw ShapeError("message_pass: feature width " +
                     std::to_string(H.shape()[1]) + " does not match layer width " +
                     std::to_string(layer.in_dim()));
  const std::int64_t n = g.n_nodes;
  EdgeBatch eb = split_edges(g);

  Tensor out;
  switch (layer.arch) {
    case Arch::Gcn: {
      auto deg = in_degrees(eb, n);
      std::vector<double> cself(static_cast<std::size_t>(n));
      for (std::int64_t v = 0; v < n; ++v)
        cself[static_cast<std::size_t>(v)] = 1.0 / (deg[static_cast<std::size_t>(v)] + 1.0);
      Tensor agg = mul(H, Tensor::from({n, 1}, cself));
      if (!eb.empty()) {
        std::vector<std::int64_t> src_all = eb.src_f;
        src_all.insert(src_all.end(), eb.src_r.begin(), eb.src_r.end());
        std::vector<double> ce(static_cast<std::size_t>(eb.size()));
        for (std::int64_t i = 0; i < eb.size(); ++i)
          ce[static_cast<std::size_t>(i)] =
              1.0 / std::sqrt((deg[static_cast<std::size_t>(eb.dst_all[static_cast<std::size_t>(i)])] + 1.0) *
                              (deg[static_cast<std::size_t>(src_all[static_cast<std::size_t>(i)])] + 1.0));
        Tensor M = edge_messages(H, layer.T, eb);
        agg = add(agg, scatter_add_rows(mul(M, Tensor::from({eb.size(), 1}, ce)),
                                        eb.dst_all, n));
      }
      out = relu(matmul(agg, layer.W));
      break;
    }
    case Arch::Gin: {
      Tensor scale = add(layer.eps, Tensor::from({1}, {1.0}));
      Tensor pre = mul(H, scale);
      if (!eb.empty())
        pre = add(pre, scatter_add_rows(edge_messages(H, layer.T, eb),
                                        eb.dst_all, n));
      Tensor h1 = relu(add(matmul(pre, layer.W1), layer.b1));
      out = add(matmul(h1, layer.W2), layer.b2);
      break;
    }
    case Arch::Sage: {
      Tensor nbr;
      if (eb.empty()) {
        nbr = Tensor::zeros({n, H.shape()[1]});
      } else {
        auto deg = in_degrees(eb, n);
        std::vector<double> inv(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t v = 0; v < n; ++v)
          if (deg[static_cast<std::size_t>(v)] > 0.0)
            inv[static_cast<std::size_t>(v)] = 1.0 / deg[static_cast<std::size_t>(v)];
        nbr = mul(scatter_add_rows(edge_messages(H, layer.T, eb), eb.dst_all, n),
                  Tensor::from({n, 1}, inv));
      }
      out = relu(matmul(concat({H, nbr}, 1), layer.W));
      break;
    }
    case Arch::Gat: {
      GatCore core = gat_core(layer, g, H);
      out = scatter_add_rows(mul(core.V, core.alpha), core.dst, n);
      break;
    }
  }
  return dropout(out, layer.dropout, dropout_rng);
}

GatAttention gat_attention(const GnnLayer& layer, GraphRef g, const Tensor& H) {
  if (layer.arch != Arch::Gat)
    throw std::invalid_argument("gat_attention: layer is not a GAT layer");
  GatCore core = gat_core(layer, g, H);
  return {core.alpha, core.dst};
}

GnnStack GnnStack::init(Arch arch, std::int64_t width, std::int64_t n_layers,
                        Rng& rng, double dropout) {
  if (n_layers < 1)
    throw std::invalid_argument("gnn stack needs at least one layer");
  GnnStack s;
  for (std::int64_t i = 0; i < n_layers; ++i)
    s.layers.push_back(GnnLayer::init(arch, width, width, rng, dropout));
  return s;
}

Tensor GnnStack::encode(GraphRef g, const Tensor& X, Rng* dropout_rng) const {
  if (layers.empty())
    throw std::invalid_argument("gnn stack needs at least one layer");
  if (g.n_nodes < 1)
    throw std::invalid_argument("encode_graph: graph has no nodes");
  Tensor H = X;
  for (const auto& layer : layers) H = message_pass(layer, g, H, dropout_rng);
  return H;
}

void GnnStack::collect(std::vector<std::pair<std::string, Tensor>>& out,
                       const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

Readout Readout::init(std::int64_t d_in, std::int64_t d_out, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
  Readout r;
  r.wg = Tensor::param({d_in, 1}, rng, -s, s);
  r.bg = Tensor::param({1}, rng, 0.0, 0.0);
  r.Wt = Tensor::param({d_in, d_out}, rng, -s, s);
  return r;
}

void Readout::collect(std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back("readout.wg", wg);
  out.emplace_back("readout.bg", bg);
  out.emplace_back("readout.Wt", Wt);
}

Tensor attention_readout(const Readout& r, const Tensor& H) {
  if (H.rank() != 2 || H.shape()[0] < 1)
    throw ShapeError("attention_readout: need at least one node row");
  Tensor gates = sigmoid(add(matmul(H, r.wg), r.bg));
  Tensor gated = mul(matmul(H, r.Wt), gates);

  // sum rows in content-sorted order: a node permutation permutes rows but
  // not their values, so the summation order and the result are bit-identical
  const std::int64_t n = gated.shape()[0];
  const std::int64_t d = gated.shape()[1];
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  const double* v = gated.data();
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     return std::lexicographical_compare(
                         v + a * d, v + (a + 1) * d, v + b * d, v + (b + 1) * d);
                   });
  return sum(gather_rows(gated, perm), 0);
}

Tensor code_embedding(const mir::Method& m, const lexical::LexModel& lex,
                      const GnnStack& stack, const Readout& readout) {
  Tensor lv = lexical::lexical_embedding(lex, m);
  depgraph::MethodGraph g = depgraph::build_method_graph(m, lex);
  return concat({lv, attention_readout(readout, stack.encode(g, g.X))}, 1);
}

Tensor code_embedding(const mir::Program& p, const lexical::LexModel& lex,
                      const GnnStack& stack, const Readout& readout) {
  Tensor lv = lexical::lexical_embedding(lex, p);
  depgraph::ProgramGraph g = depgraph::build_program_graph(p, lex);
  return concat({lv, attention_readout(readout, stack.encode(g, g.X))}, 1);
}

}  // namespace depvec::gnn
