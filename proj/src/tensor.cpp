#include "depvec/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "depvec/kernels.hpp"

namespace depvec {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::int64_t shape_product(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

void check_positive_extents(const Shape& s, const char* where) {
  if (s.empty()) throw ShapeError(std::string(where) + ": empty shape");
  for (auto e : s) {
    if (e <= 0)
      throw ShapeError(std::string(where) + ": non-positive extent in " +
                       shape_str(s));
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                   shape_str(b) + " do not conform");
}

enum class Bcast { Same, Row, Col, Scalar };

// second operand may broadcast against a rank-2 first operand
Bcast classify(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::Same;
  if (shape_product(b) == 1) return Bcast::Scalar;
  if (a.size() == 2) {
    if (b.size() == 1 && b[0] == a[1]) return Bcast::Row;
    if (b.size() == 2 && b[0] == 1 && b[1] == a[1]) return Bcast::Row;
    if (b.size() == 2 && b[0] == a[0] && b[1] == 1) return Bcast::Col;
  }
  shape_error(op, a, b);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void record(Op op, std::vector<Tensor> inputs, Tensor output,
            std::int64_t axis = 0, std::int64_t begin = 0, std::int64_t end = 0,
            double scalar = 0.0, std::vector<std::int64_t> rows = {},
            std::vector<double> saved = {}) {
  Tape* tape = g_active_tape;
  bool any_grad = false;
  for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
  if (tape == nullptr || !any_grad) return;
  output.set_requires_grad(true);
  TapeEntry e;
  e.op = op;
  e.inputs = std::move(inputs);
  e.output = std::move(output);
  e.axis = axis;
  e.begin = begin;
  e.end = end;
  e.scalar = scalar;
  e.rows = std::move(rows);
  e.saved = std::move(saved);
  tape->append(std::move(e));
}

kernels::Binary to_kernel(Op op) {
  switch (op) {
    case Op::Add: return kernels::Binary::Add;
    case Op::Sub: return kernels::Binary::Sub;
    default: return kernels::Binary::Mul;
  }
}

Tensor binary_op(Op op, const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(op_name(op), a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::int64_t n = a.size();
  switch (bc) {
    case Bcast::Same:
      kernels::binary(to_kernel(op), pa, pb, po, n);
      break;
    case Bcast::Scalar: {
      const double v = pb[0];
      for (std::int64_t i = 0; i < n; ++i)
        po[i] = op == Op::Add ? pa[i] + v : op == Op::Sub ? pa[i] - v : pa[i] * v;
      break;
    }
    case Bcast::Row: {
      const std::int64_t r = a.shape()[0], c = a.shape()[1];
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) {
          const double v = pb[j];
          const std::int64_t k = i * c + j;
          po[k] = op == Op::Add ? pa[k] + v : op == Op::Sub ? pa[k] - v : pa[k] * v;
        }
      break;
    }
    case Bcast::Col: {
      const std::int64_t r = a.shape()[0], c = a.shape()[1];
      for (std::int64_t i = 0; i < r; ++i) {
        const double v = pb[i];
        for (std::int64_t j = 0; j < c; ++j) {
          const std::int64_t k = i * c + j;
          po[k] = op == Op::Add ? pa[k] + v : op == Op::Sub ? pa[k] - v : pa[k] * v;
        }
      }
      break;
    }
  }
  record(op, {a, b}, out);
  return out;
}

Tensor unary_op(Op op, const Tensor& a, double slope = 0.0) {
  if (op == Op::Log) {
    for (double x : a.values())
      if (!std::isfinite(x) || x <= 0.0)
        throw NumericDomainError(
            "log: input outside domain (non-finite or <= 0)");
  }
  Tensor out = Tensor::zeros(a.shape());
  kernels::Unary k;
  switch (op) {
    case Op::Exp: k = kernels::Unary::Exp; break;
    case Op::Log: k = kernels::Unary::Log; break;
    case Op::Tanh: k = kernels::Unary::Tanh; break;
    case Op::Sigmoid: k = kernels::Unary::Sigmoid; break;
    case Op::Relu: k = kernels::Unary::Relu; break;
    default: k = kernels::Unary::LeakyRelu; break;
  }
  kernels::unary(k, a.data(), out.data(), a.size(), slope);
  record(op, {a}, out, 0, 0, 0, slope);
  return out;
}

struct Groups {
  std::int64_t count;   // number of groups
  std::int64_t len;     // elements per group
  std::int64_t stride;  // step between consecutive elements of a group
  std::int64_t pitch;   // step between group starts
};

// axis=1 on rank-2 groups rows; axis=0 groups columns; rank-1 is one group
Groups make_groups(const Tensor& a, std::int64_t axis, const char* op) {
  if (a.rank() == 1) return {1, a.size(), 1, 0};
  if (a.rank() == 2) {
    const std::int64_t r = a.shape()[0], c = a.shape()[1];
    if (axis == 1) return {r, c, 1, c};
    if (axis == 0) return {c, r, c, 1};
  }
  throw ShapeError(std::string(op) + ": unsupported axis for shape " +
                   shape_str(a.shape()));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "elementwise-mul";
    case Op::ScalarMul: return "scalar-mul";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Softmax: return "softmax";
    case Op::LeakyRelu: return "leaky-relu";
    case Op::Dropout: return "dropout";
    case Op::GatherRows: return "gather-rows";
    case Op::ScatterAddRows: return "scatter-add-rows";
  }
  return "?";
}

Tensor Tensor::zeros(Shape shape) {
  check_positive_extents(shape, "tensor");
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value.assign(shape_product(t.impl_->shape), 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.impl_->value) x = v;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_positive_extents(shape, "tensor");
  if (shape_product(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(values);
  return t;
}

Tensor Tensor::param(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.impl_->value)
    x = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
  t.impl_->requires_grad = true;
  return t;
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor is not rank-2");
  return shape()[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor is not rank-2");
  return shape()[1];
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  return impl_->value[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  record(Op::MatMul, {a, b}, out);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(Op::Mul, a, b); }

Tensor smul(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  kernels::scale(a.data(), out.data(), a.size(), c);
  record(Op::ScalarMul, {a}, out, 0, 0, 0, c);
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::int64_t rank = parts[0].rank();
  for (const auto& p : parts)
    if (p.rank() != rank) shape_error("concat", parts[0].shape(), p.shape());
  if (rank == 1 || (rank == 2 && axis == 0)) {
    std::int64_t total = 0;
    const std::int64_t c = rank == 2 ? parts[0].shape()[1] : 1;
    for (const auto& p : parts) {
      if (rank == 2 && p.shape()[1] != c)
        shape_error("concat", parts[0].shape(), p.shape());
      total += p.shape()[0];
    }
    Tensor out = rank == 2 ? Tensor::zeros({total, c}) : Tensor::zeros({total});
    double* po = out.data();
    for (const auto& p : parts) {
      std::copy(p.data(), p.data() + p.size(), po);
      po += p.size();
    }
    record(Op::Concat, parts, out, 0);
    return out;
  }
  if (rank == 2 && axis == 1) {
    const std::int64_t r = parts[0].shape()[0];
    std::int64_t total = 0;
    for (const auto& p : parts) {
      if (p.shape()[0] != r) shape_error("concat", parts[0].shape(), p.shape());
      total += p.shape()[1];
    }
    Tensor out = Tensor::zeros({r, total});
    std::int64_t off = 0;
    for (const auto& p : parts) {
      const std::int64_t c = p.shape()[1];
      for (std::int64_t i = 0; i < r; ++i)
        std::copy(p.data() + i * c, p.data() + (i + 1) * c,
                  out.data() + i * total + off);
      off += c;
    }
    record(Op::Concat, parts, out, 1);
    return out;
  }
  throw ShapeError("concat: unsupported axis " + std::to_string(axis));
}

Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t begin,
             std::int64_t end) {
  const std::int64_t extent =
      a.rank() == 1 ? a.shape()[0]
                    : (axis == 0 ? a.shape()[0] : a.shape()[1]);
  if (begin < 0 || end <= begin || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + shape_str(a.shape()));
  Tensor out;
  if (a.rank() == 1) {
    out = Tensor::zeros({end - begin});
    std::copy(a.data() + begin, a.data() + end, out.data());
  } else if (axis == 0) {
    const std::int64_t c = a.shape()[1];
    out = Tensor::zeros({end - begin, c});
    std::copy(a.data() + begin * c, a.data() + end * c, out.data());
  } else {
    const std::int64_t r = a.shape()[0], c = a.shape()[1];
    out = Tensor::zeros({r, end - begin});
    for (std::int64_t i = 0; i < r; ++i)
      std::copy(a.data() + i * c + begin, a.data() + i * c + end,
                out.data() + i * (end - begin));
  }
  record(Op::Slice, {a}, out, axis, begin, end);
  return out;
}

static Tensor reduce_op(Op op, const Tensor& a, std::int64_t axis) {
  Tensor out;
  if (axis == -1 || a.rank() == 1) {
    double acc = kernels::full_reduce(a.data(), a.size());
    if (op == Op::Mean) acc /= static_cast<double>(a.size());
    out = Tensor::scalar(acc);
    record(op, {a}, out, -1);
    return out;
  }
  if (a.rank() != 2 || (axis != 0 && axis != 1))
    throw ShapeError(std::string(op_name(op)) + ": unsupported axis " +
                     std::to_string(axis) + " for " + shape_str(a.shape()));
  const std::int64_t r = a.shape()[0], c = a.shape()[1];
  if (axis == 0) {
    out = Tensor::zeros({1, c});
    kernels::row_reduce(a.data(), out.data(), r, c);
    if (op == Op::Mean)
      for (auto& v : out.values()) v /= static_cast<double>(r);
  } else {
    out = Tensor::zeros({r, 1});
    kernels::col_reduce(a.data(), out.data(), r, c);
    if (op == Op::Mean)
      for (auto& v : out.values()) v /= static_cast<double>(c);
  }
  record(op, {a}, out, axis);
  return out;
}

Tensor sum(const Tensor& a, std::int64_t axis) { return reduce_op(Op::Sum, a, axis); }
Tensor mean(const Tensor& a, std::int64_t axis) { return reduce_op(Op::Mean, a, axis); }

Tensor exp(const Tensor& a) { return unary_op(Op::Exp, a); }
Tensor log(const Tensor& a) { return unary_op(Op::Log, a); }
Tensor tanh(const Tensor& a) { return unary_op(Op::Tanh, a); }
Tensor sigmoid(const Tensor& a) { return unary_op(Op::Sigmoid, a); }
Tensor relu(const Tensor& a) { return unary_op(Op::Relu, a); }
Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(Op::LeakyRelu, a, slope);
}

Tensor softmax(const Tensor& a, std::int64_t axis) {
  if (!all_finite(a.values()))
    throw NumericDomainError("softmax: non-finite input");
  const Groups g = make_groups(a, axis, "softmax");
  Tensor out = Tensor::zeros(a.shape());
  const double* px = a.data();
  double* py = out.data();
  for (std::int64_t gi = 0; gi < g.count; ++gi) {
    const std::int64_t base = gi * g.pitch;
    double mx = px[base];
    for (std::int64_t e = 1; e < g.len; ++e)
      mx = std::max(mx, px[base + e * g.stride]);
    double denom = 0.0;
    for (std::int64_t e = 0; e < g.len; ++e)
      denom += std::exp(px[base + e * g.stride] - mx);
    for (std::int64_t e = 0; e < g.len; ++e)
      py[base + e * g.stride] = std::exp(px[base + e * g.stride] - mx) / denom;
  }
  record(Op::Softmax, {a}, out, axis);
  return out;
}

Tensor dropout(const Tensor& a, double p, Rng* rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0,1), got " +
                                std::to_string(p));
  if (rng == nullptr) return a;  // inference: identity
  Tensor out = Tensor::zeros(a.shape());
  std::vector<double> mask(a.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::int64_t i = 0; i < a.size(); ++i)
    mask[i] = rng->uniform() >= p ? keep_scale : 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * mask[i];
  record(Op::Dropout, {a}, out, 0, 0, 0, p, {}, std::move(mask));
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& rows) {
  if (a.rank() != 2) throw ShapeError("gather-rows: input must be rank-2");
  if (rows.empty()) throw ShapeError("gather-rows: empty row list");
  const std::int64_t r = a.shape()[0], c = a.shape()[1];
  for (auto i : rows)
    if (i < 0 || i >= r)
      throw ShapeError("gather-rows: row " + std::to_string(i) +
                       " outside " + shape_str(a.shape()));
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows.size()), c});
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy(a.data() + rows[k] * c, a.data() + (rows[k] + 1) * c,
              out.data() + static_cast<std::int64_t>(k) * c);
  record(Op::GatherRows, {a}, out, 0, 0, 0, 0.0, rows);
  return out;
}

Tensor scatter_add_rows(const Tensor& a, const std::vector<std::int64_t>& rows,
                        std::int64_t out_rows) {
  if (a.rank() != 2) throw ShapeError("scatter-add-rows: input must be rank-2");
  if (static_cast<std::int64_t>(rows.size()) != a.shape()[0])
    throw ShapeError("scatter-add-rows: " + std::to_string(rows.size()) +
                     " indices for " + shape_str(a.shape()));
  const std::int64_t c = a.shape()[1];
  for (auto i : rows)
    if (i < 0 || i >= out_rows)
      throw ShapeError("scatter-add-rows: row " + std::to_string(i) +
                       " outside output with " + std::to_string(out_rows) +
                       " rows");
  Tensor out = Tensor::zeros({out_rows, c});
  // accumulation follows the index list order so node aggregation is
  // reproducible and permutation-equivariant at the bit level
  for (std::size_t k = 0; k < rows.size(); ++k)
    kernels::axpy(a.data() + static_cast<std::int64_t>(k) * c,
                  out.data() + rows[k] * c, c, 1.0);
  record(Op::ScatterAddRows, {a}, out, 0, 0, 0, 0.0, rows);
  return out;
}

namespace {

void add_into(std::vector<double>& g, const double* delta, std::int64_t n,
              double factor = 1.0) {
  for (std::int64_t i = 0; i < n; ++i) g[i] += factor * delta[i];
}

// gradient of a broadcast second operand: reduce upstream over the broadcast
// dims, optionally multiplied elementwise by `other` (for Mul)
void reduce_into(std::vector<double>& gb, const TapeEntry& e,
                 const std::vector<double>& up, const double* other,
                 double sign) {
  const Shape& ash = e.inputs[0].shape();
  const Shape& bsh = e.inputs[1].shape();
  const Bcast bc = classify(op_name(e.op), ash, bsh);
  const std::int64_t n = e.inputs[0].size();
  switch (bc) {
    case Bcast::Same:
      for (std::int64_t i = 0; i < n; ++i)
        gb[i] += sign * up[i] * (other ? other[i] : 1.0);
      break;
    case Bcast::Scalar: {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i)
        acc += up[i] * (other ? other[i] : 1.0);
      gb[0] += sign * acc;
      break;
    }
    case Bcast::Row: {
      const std::int64_t r = ash[0], c = ash[1];
      for (std::int64_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < r; ++i)
          acc += up[i * c + j] * (other ? other[i * c + j] : 1.0);
        gb[j] += sign * acc;
      }
      break;
    }
    case Bcast::Col: {
      const std::int64_t r = ash[0], c = ash[1];
      for (std::int64_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < c; ++j)
          acc += up[i * c + j] * (other ? other[i * c + j] : 1.0);
        gb[i] += sign * acc;
      }
      break;
    }
  }
}

// expand broadcast operand b to a's layout at flat index k
inline double bcast_value(const TapeEntry& e, Bcast bc, std::int64_t k) {
  const double* pb = e.inputs[1].data();
  switch (bc) {
    case Bcast::Same: return pb[k];
    case Bcast::Scalar: return pb[0];
    case Bcast::Row: return pb[k % e.inputs[0].shape()[1]];
    case Bcast::Col: return pb[k / e.inputs[0].shape()[1]];
  }
  return 0.0;
}

void backward_entry(TapeEntry& e) {
  Tensor& out = e.output;
  if (!out.has_grad()) return;  // not on the path to the loss
  const std::vector<double>& up = out.impl()->grad;
  Tensor& a = e.inputs[0];
  const bool ga = a.requires_grad();

  switch (e.op) {
    case Op::MatMul: {
      Tensor& b = e.inputs[1];
      const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      if (ga) {
        std::vector<double> d(m * k);
        kernels::matmul_nt(up.data(), b.data(), d.data(), m, n, k);
        add_into(a.grad(), d.data(), m * k);
      }
      if (b.requires_grad()) {
        std::vector<double> d(k * n);
        kernels::matmul_tn(a.data(), up.data(), d.data(), m, k, n);
        add_into(b.grad(), d.data(), k * n);
      }
      break;
    }
    case Op::Add:
    case Op::Sub: {
      Tensor& b = e.inputs[1];
      if (ga) add_into(a.grad(), up.data(), a.size());
      if (b.requires_grad())
        reduce_into(b.grad(), e, up, nullptr, e.op == Op::Add ? 1.0 : -1.0);
      break;
    }
    case Op::Mul: {
      Tensor& b = e.inputs[1];
      if (ga) {
        const Bcast bc = classify("elementwise-mul", a.shape(), b.shape());
        auto& g = a.grad();
        for (std::int64_t i = 0; i < a.size(); ++i)
          g[i] += up[i] * bcast_value(e, bc, i);
      }
      if (b.requires_grad()) reduce_into(b.grad(), e, up, a.data(), 1.0);
      break;
    }
    case Op::ScalarMul:
      if (ga) add_into(a.grad(), up.data(), a.size(), e.scalar);
      break;
    case Op::Concat: {
      std::int64_t off = 0;
      if (e.axis == 0) {
        for (auto& p : e.inputs) {
          if (p.requires_grad())
            add_into(p.grad(), up.data() + off, p.size());
          off += p.size();
        }
      } else {
        const std::int64_t r = e.inputs[0].shape()[0];
        const std::int64_t total = out.shape()[1];
        for (auto& p : e.inputs) {
          const std::int64_t c = p.shape()[1];
          if (p.requires_grad()) {
            auto& g = p.grad();
            for (std::int64_t i = 0; i < r; ++i)
              for (std::int64_t j = 0; j < c; ++j)
                g[i * c + j] += up[i * total + off + j];
          }
          off += c;
        }
      }
      break;
    }
    case Op::Slice: {
      if (!ga) break;
      auto& g = a.grad();
      if (a.rank() == 1) {
        for (std::int64_t i = e.begin; i < e.end; ++i) g[i] += up[i - e.begin];
      } else if (e.axis == 0) {
        const std::int64_t c = a.shape()[1];
        for (std::int64_t i = e.begin; i < e.end; ++i)
          for (std::int64_t j = 0; j < c; ++j)
            g[i * c + j] += up[(i - e.begin) * c + j];
      } else {
        const std::int64_t r = a.shape()[0], c = a.shape()[1];
        const std::int64_t w = e.end - e.begin;
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < w; ++j)
            g[i * c + e.begin + j] += up[i * w + j];
      }
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      if (!ga) break;
      auto& g = a.grad();
      const bool is_mean = e.op == Op::Mean;
      if (e.axis == -1 || a.rank() == 1) {
        const double f = up[0] / (is_mean ? static_cast<double>(a.size()) : 1.0);
        for (std::int64_t i = 0; i < a.size(); ++i) g[i] += f;
      } else {
        const std::int64_t r = a.shape()[0], c = a.shape()[1];
        if (e.axis == 0) {
          const double dn = is_mean ? static_cast<double>(r) : 1.0;
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += up[j] / dn;
        } else {
          const double dn = is_mean ? static_cast<double>(c) : 1.0;
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += up[i] / dn;
        }
      }
      break;
    }
    case Op::Exp: {
      if (!ga) break;
      auto& g = a.grad();
      const double* y = out.data();
      for (std::int64_t i = 0; i < a.size(); ++i) g[i] += up[i] * y[i];
      break;
    }
    case Op::Log: {
      if (!ga) break;
      auto& g = a.grad();
      const double* x = a.data();
      for (std::int64_t i = 0; i < a.size(); ++i) g[i] += up[i] / x[i];
      break;
    }
    case Op::Tanh: {
      if (!ga) break;
      auto& g = a.grad();
      const double* y = out.data();
      for (std::int64_t i = 0; i < a.size(); ++i)
        g[i] += up[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Sigmoid: {
      if (!ga) break;
      auto& g = a.grad();
      const double* y = out.data();
      for (std::int64_t i = 0; i < a.size(); ++i)
        g[i] += up[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Relu: {
      if (!ga) break;
      auto& g = a.grad();
      const double* x = a.data();
      for (std::int64_t i = 0; i < a.size(); ++i)
        g[i] += x[i] > 0.0 ? up[i] : 0.0;
      break;
    }
    case Op::LeakyRelu: {
      if (!ga) break;
      auto& g = a.grad();
      const double* x = a.data();
      for (std::int64_t i = 0; i < a.size(); ++i)
        g[i] += x[i] > 0.0 ? up[i] : e.scalar * up[i];
      break;
    }
    case Op::Softmax: {
      if (!ga) break;
      auto& g = a.grad();
      const double* y = out.data();
      const Groups gr = make_groups(a, e.axis, "softmax");
      for (std::int64_t gi = 0; gi < gr.count; ++gi) {
        const std::int64_t base = gi * gr.pitch;
        double dot = 0.0;
        for (std::int64_t k = 0; k < gr.len; ++k) {
          const std::int64_t idx = base + k * gr.stride;
          dot += up[idx] * y[idx];
        }
        for (std::int64_t k = 0; k < gr.len; ++k) {
          const std::int64_t idx = base + k * gr.stride;
          g[idx] += y[idx] * (up[idx] - dot);
        }
      }
      break;
    }
    case Op::Dropout: {
      if (!ga) break;
      auto& g = a.grad();
      for (std::int64_t i = 0; i < a.size(); ++i) g[i] += up[i] * e.saved[i];
      break;
    }
    case Op::GatherRows: {
      if (!ga) break;
      auto& g = a.grad();
      const std::int64_t c = a.shape()[1];
      for (std::size_t k = 0; k < e.rows.size(); ++k)
        for (std::int64_t j = 0; j < c; ++j)
          g[e.rows[k] * c + j] += up[static_cast<std::int64_t>(k) * c + j];
      break;
    }
    case Op::ScatterAddRows: {
      if (!ga) break;
      auto& g = a.grad();
      const std::int64_t c = a.shape()[1];
      for (std::size_t k = 0; k < e.rows.size(); ++k)
        for (std::int64_t j = 0; j < c; ++j)
          g[static_cast<std::int64_t>(k) * c + j] += up[e.rows[k] * c + j];
      break;
    }
  }
}

}  // namespace

void backward(const Tensor& loss, Tape& tape) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    backward_entry(*it);
  tape.clear();
}

Tensor finite_difference_gradient(const std::function<double()>& f,
                                  Tensor params, double h) {
  Tensor out = Tensor::zeros(params.shape());
  double* p = params.data();
  for (std::int64_t i = 0; i < params.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double fp = f();
    p[i] = saved - h;
    const double fm = f();
    p[i] = saved;
    out.data()[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace depvec
