#include "trustalign/numerics/optim.hpp"

#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::numerics {

namespace {
const Tensor* find_grad(const GradientMap& grads, const ParameterSet::Entry& e) {
  if (!e.trainable) return nullptr;
  auto it = grads.find(e.name);
  if (it == grads.end()) return nullptr;
  require(it->second.shape() == e.value.shape(), "gradient shape mismatch for '" + e.name + "'");
  return &it->second;
}
}  // namespace

void GradientDescent::step(ParameterSet& params, const GradientMap& grads) {
  for (auto& e : params.entries()) {
    const Tensor* g = find_grad(grads, e);
    if (!g) continue;
    for (std::size_t i = 0; i < g->size(); ++i) e.value[i] -= lr_ * (*g)[i];
  }
}

void Momentum::step(ParameterSet& params, const GradientMap& grads) {
  for (auto& e : params.entries()) {
    const Tensor* g = find_grad(grads, e);
    if (!g) continue;
    auto [it, fresh] = velocity_.try_emplace(e.name, e.value.shape(), 0.0);
    Tensor& v = it->second;
    for (std::size_t i = 0; i < g->size(); ++i) {
      v[i] = mu_ * v[i] + (*g)[i];
      e.value[i] -= lr_ * v[i];
    }
  }
}

void Adam::step(ParameterSet& params, const GradientMap& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& e : params.entries()) {
    const Tensor* g = find_grad(grads, e);
    if (!g) continue;
    Tensor& m = m_.try_emplace(e.name, e.value.shape(), 0.0).first->second;
    Tensor& v = v_.try_emplace(e.name, e.value.shape(), 0.0).first->second;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double gi = (*g)[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      e.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace trustalign::numerics
