#pragma once

#include <map>
#include <memory>
#include <string>

#include "trustalign/numerics/params.hpp"

namespace trustalign::numerics {

/// Applies gradients to the trainable entries of a ParameterSet. Entries
/// absent from the gradient map are left alone.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& params, const GradientMap& grads) = 0;
};

/// θ ← θ − lr·g
class GradientDescent final : public Optimizer {
 public:
  explicit GradientDescent(double learning_rate) : lr_(learning_rate) {}
  void step(ParameterSet& params, const GradientMap& grads) override;

 private:
  double lr_;
};

/// Heavy-ball momentum: v ← μ·v + g, θ ← θ − lr·v
class Momentum final : public Optimizer {
 public:
  Momentum(double learning_rate, double momentum) : lr_(learning_rate), mu_(momentum) {}
  void step(ParameterSet& params, const GradientMap& grads) override;

 private:
  double lr_, mu_;
  std::map<std::string, Tensor> velocity_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(ParameterSet& params, const GradientMap& grads) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace trustalign::numerics
