#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trustalign/numerics/tensor.hpp"

namespace trustalign::reward {

using numerics::Tensor;

/// How ‖z‖_{V⁻¹} is evaluated: ‖V⁻¹z‖₂ (inverse, the default) or √(zᵀV⁻¹z) (elliptic).
enum class NormMode { inverse, elliptic };

NormMode norm_mode_from_string(const std::string& name);
std::string to_string(NormMode mode);

/// Ridge head: V = ZᵀZ + λI, its Cholesky factor, and ψ̂ = V⁻¹Zᵀy.
class GramState {
 public:
  GramState() = default;
  /// Rebuilds from a stored V and ψ̂ (used by checkpoints).
  GramState(Eigen::MatrixXd v, Eigen::VectorXd psi_hat, double lambda, std::size_t n_samples);

  std::size_t dim() const { return static_cast<std::size_t>(psi_.size()); }
  double lambda() const { return lambda_; }
  std::size_t n_samples() const { return n_; }
  const Eigen::MatrixXd& v() const { return v_; }
  const Eigen::VectorXd& psi_hat() const { return psi_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  double log_det_v() const;

  double predict(const Eigen::VectorXd& z) const;
  double confidence_norm(const Eigen::VectorXd& z, NormMode mode = NormMode::inverse) const;

 private:
  friend GramState fit_ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda);
  void factorize();

  Eigen::MatrixXd v_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd psi_;
  double lambda_ = 1.0;
  std::size_t n_ = 0;
};

/// Unique minimiser of ‖Zψ − y‖² + λ‖ψ‖².
GramState fit_ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda);

struct BoundConstant {
  double b = 0.0;
  double delta = 0.1;
  double psi_norm = 0.0;
  /// ln( det(V)^{1/2} det(λI)^{-1/2} / δ )
  double log_term = 0.0;
  double c_bound = 0.0;
};

/// C = B·√(2·log_term) + √λ·psi_norm, with δ in (0, 1].
BoundConstant bound_constant(const GramState& head, double b, double delta, double psi_norm);

/// confidence_norm(z) · C
double error_bound(const GramState& head, const BoundConstant& bound, const Eigen::VectorXd& z,
                   NormMode mode = NormMode::inverse);

Eigen::MatrixXd to_eigen(const Tensor& t);
Eigen::VectorXd to_eigen_vector(const std::vector<double>& v);

}  // namespace trustalign::reward
