#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "depvec/tensor.hpp"

namespace depvec {

// Adam with bias correction. Every registered parameter must have received a
// gradient before step(); register only the tensors the current objective
// actually trains. step() consumes and zeroes the gradients.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add(const std::string& name, Tensor t);
  void step();

  std::int64_t steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  struct Slot {
    std::string name;
    Tensor tensor;
    std::vector<double> m, v;
  };

  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace depvec
