#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "depvec/rng.hpp"

namespace depvec {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};

// Shared handle to a dense fp64 tensor. Rank 1 and 2 cover everything here;
// scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(Shape shape, std::vector<double> values);
  // uniform init rounded through fp32 so fresh models survive checkpoint
  // round-trips exactly; marks requires_grad
  static Tensor param(Shape shape, Rng& rng, double lo, double hi);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(impl_->value.size());
  }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t rows() const;  // rank-2 only
  std::int64_t cols() const;

  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& values() const { return impl_->value; }
  double item() const;  // scalar only

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad();  // sizes (zero-filled) on first use
  void zero_grad() { impl_->grad.clear(); }

  TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

enum class Op {
  MatMul,
  Add,
  Sub,
  Mul,
  ScalarMul,
  Concat,
  Slice,
  Sum,
  Mean,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Relu,
  Softmax,
  LeakyRelu,
  Dropout,
  GatherRows,
  ScatterAddRows,
};

const char* op_name(Op op);

struct TapeEntry {
  Op op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::int64_t axis = 0;
  std::int64_t begin = 0;
  std::int64_t end = 0;
  double scalar = 0.0;
  std::vector<std::int64_t> rows;  // gather / scatter row indices
  std::vector<double> saved;       // dropout keep mask (already 1/(1-p) scaled)
};

// Ordered record of primitive applications; inputs always precede consumers
// because entries are appended as outputs are produced.
class Tape {
 public:
  void append(TapeEntry e) { entries_.push_back(std::move(e)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  const std::vector<TapeEntry>& entries() const { return entries_; }
  std::vector<TapeEntry>& entries() { return entries_; }

 private:
  std::vector<TapeEntry> entries_;
};

// RAII scope marking `tape` as the active record on this thread. Primitive
// applications involving a requires_grad input are appended to it; with no
// active tape everything runs in inference mode.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

// ---- primitives -----------------------------------------------------------
//
// add/sub/mul accept equal shapes, plus limited broadcasts of the second
// operand against a rank-2 first operand: a row {1,k} or {k}, a column {n,1},
// or a scalar {1}. Gradients reduce over the broadcast dimensions.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor smul(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t begin,
             std::int64_t end);
// axis -1 reduces everything to {1}; 0 reduces rows to {1,k}; 1 columns to {n,1}
Tensor sum(const Tensor& a, std::int64_t axis = -1);
Tensor mean(const Tensor& a, std::int64_t axis = -1);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor softmax(const Tensor& a, std::int64_t axis);
// training mode iff rng given; inverted mask so inference is identity
Tensor dropout(const Tensor& a, double p, Rng* rng);
Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& rows);
Tensor scatter_add_rows(const Tensor& a, const std::vector<std::int64_t>& rows,
                        std::int64_t out_rows);

// ∂loss/∂t accumulated into .grad() of every requires_grad tensor reached by
// the record; the record is consumed.
void backward(const Tensor& loss, Tape& tape);

// Central differences (f(x+h)-f(x-h))/2h per element; params restored after.
Tensor finite_difference_gradient(const std::function<double()>& f,
                                  Tensor params, double h = 1e-5);

}  // namespace depvec
