#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "depvec/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

// backward vs central differences over every element of every param
inline void check_grads(const std::function<depvec::Tensor()>& loss_fn,
                        std::vector<depvec::Tensor> params, double tol = 1e-4) {
  using namespace depvec;
  for (auto& p : params) p.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    backward(loss, tape);
  }
  auto eval = [&]() { return loss_fn().item(); };
  for (auto& p : params) {
    REQUIRE(p.has_grad());
    Tensor fd = finite_difference_gradient(eval, p);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      INFO("param element ", i);
      CHECK(rel_err(p.grad()[i], fd.data()[i]) < tol);
    }
  }
}

}  // namespace testutil
