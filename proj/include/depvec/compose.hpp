#pragma once

#include "depvec/tensor.hpp"

namespace depvec {

// log(1 + exp(z)) assembled from primitives without overflow:
// softplus(z) = relu(z) + log(1 + exp(-|z|))
inline Tensor softplus(const Tensor& z) {
  Tensor zp = relu(z);
  Tensor za = add(zp, relu(smul(z, -1.0)));  // |z|
  return add(zp, log(add(exp(smul(za, -1.0)), Tensor::scalar(1.0))));
}

// log sigma(z) = -softplus(-z), safe for large |z|
inline Tensor logsigmoid(const Tensor& z) {
  return smul(softplus(smul(z, -1.0)), -1.0);
}

}  // namespace depvec
