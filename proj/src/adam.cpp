#include "depvec/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace depvec {

void Adam::add(const std::string& name, Tensor t) {
  if (!t.defined() || !t.requires_grad())
    throw std::invalid_argument("adam: \"" + name +
                                "\" is not a trainable tensor");
  for (const auto& s : slots_)
    if (s.name == name)
      throw std::invalid_argument("adam: duplicate parameter \"" + name + "\"");
  Slot s;
  s.name = name;
  s.tensor = std::move(t);
  s.m.assign(s.tensor.size(), 0.0);
  s.v.assign(s.tensor.size(), 0.0);
  slots_.push_back(std::move(s));
}

void Adam::step() {
  for (const auto& s : slots_)
    if (!s.tensor.has_grad())
      throw std::runtime_error("adam: parameter \"" + s.name +
                               "\" has no gradient");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    double* w = s.tensor.data();
    const std::vector<double>& g = s.tensor.impl()->grad;
    for (std::int64_t i = 0; i < s.tensor.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    s.tensor.zero_grad();
  }
}

}  // namespace depvec
