#include "trustalign/reward/ridge.hpp"

#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::reward {

NormMode norm_mode_from_string(const std::string& name) {
  if (name == "inverse") return NormMode::inverse;
  if (name == "elliptic") return NormMode::elliptic;
  throw ValidationError("unknown norm mode '" + name + "'");
}

std::string to_string(NormMode mode) { return mode == NormMode::inverse ? "inverse" : "elliptic"; }

GramState::GramState(Eigen::MatrixXd v, Eigen::VectorXd psi_hat, double lambda, std::size_t n_samples)
    : v_(std::move(v)), psi_(std::move(psi_hat)), lambda_(lambda), n_(n_samples) {
  require(lambda_ > 0.0, "lambda must be > 0");
  require(v_.rows() == v_.cols() && v_.rows() == psi_.size(), "GramState: V and psi dimensions differ");
  factorize();
}

void GramState::factorize() {
  llt_.compute(v_);
  if (llt_.info() != Eigen::Success) throw NumericError("Gram matrix is not positive definite");
  const Eigen::MatrixXd l = llt_.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw NumericError("Gram matrix has a non-positive Cholesky pivot");
  }
}

Eigen::VectorXd GramState::solve(const Eigen::VectorXd& rhs) const {
  require(rhs.size() == psi_.size(), "solve: width " + std::to_string(rhs.size()) + ", expected " +
                                         std::to_string(psi_.size()));
  return llt_.solve(rhs);
}

double GramState::log_det_v() const {
  const Eigen::MatrixXd l = llt_.matrixL();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

double GramState::predict(const Eigen::VectorXd& z) const {
  require(z.size() == psi_.size(), "predict: feature width " + std::to_string(z.size()) + ", expected " +
                                       std::to_string(psi_.size()));
  require(z.allFinite(), "predict: non-finite features");
  return z.dot(psi_);
}

double GramState::confidence_norm(const Eigen::VectorXd& z, NormMode mode) const {
  require(z.allFinite(), "confidence_norm: non-finite features");
  const Eigen::VectorXd w = solve(z);
  if (mode == NormMode::inverse) return w.norm();
  return std::sqrt(std::max(0.0, z.dot(w)));
}

GramState fit_ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda) {
  require(lambda > 0.0, "ridge lambda must be > 0");
  require(z.rows() >= 1, "fit_ridge needs at least one sample");
  require(z.rows() == y.size(), "fit_ridge: Z has " + std::to_string(z.rows()) + " rows but y has " +
                                    std::to_string(y.size()));
  require(z.allFinite() && y.allFinite(), "fit_ridge: non-finite inputs");
  GramState g;
  g.lambda_ = lambda;
  g.n_ = static_cast<std::size_t>(z.rows());
  g.v_ = z.transpose() * z;
  g.v_.diagonal().array() += lambda;
  g.factorize();
  const Eigen::VectorXd zty = z.transpose() * y;
  g.psi_ = g.llt_.solve(zty);
  const double scale = std::max(zty.norm(), 1e-300);
  if ((g.v_ * g.psi_ - zty).norm() / scale > 1e-8 && zty.norm() > 0.0) {
    throw NumericError("ridge solve residual exceeds 1e-8");
  }
  return g;
}

BoundConstant bound_constant(const GramState& head, double b, double delta, double psi_norm) {
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  require(b >= 0.0, "B must be >= 0");
  require(psi_norm >= 0.0, "psi_norm must be >= 0");
  BoundConstant c;
  c.b = b;
  c.delta = delta;
  c.psi_norm = psi_norm;
  const double d = static_cast<double>(head.dim());
  c.log_term = std::max(0.0, 0.5 * head.log_det_v() - 0.5 * d * std::log(head.lambda()) - std::log(delta));
  c.c_bound = b * std::sqrt(2.0 * c.log_term) + std::sqrt(head.lambda()) * psi_norm;
  return c;
}

double error_bound(const GramState& head, const BoundConstant& bound, const Eigen::VectorXd& z, NormMode mode) {
  return head.confidence_norm(z, mode) * bound.c_bound;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  }
  return m;
}

Eigen::VectorXd to_eigen_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace trustalign::reward
