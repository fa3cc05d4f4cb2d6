#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trustalign/reward/reward_net.hpp"
#include "trustalign/reward/ridge.hpp"

namespace trustalign::reward {

struct CoverageRow {
  std::size_t sample_id = 0;
  double f = 0.0;
  double abs_error = 0.0;
  double bound = 0.0;
  bool covered = false;
};

struct CoverageReport {
  std::vector<CoverageRow> rows;
  double coverage = 0.0;
  double c_bound = 0.0;
  NormMode mode = NormMode::inverse;
};

/// |zᵀψ̂ − truth| against confidence_norm(z)·C for each row of `z`.
CoverageReport coverage_report(const GramState& head, const BoundConstant& bound, const Eigen::MatrixXd& z,
                               const Eigen::VectorXd& truth, NormMode mode);

/// Held-out annotation records scored against normalise(oracle_clean).
CoverageReport verify_bound(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& heldout,
                            const dataset::NormalizationTable& table, dataset::NormalizationMode norm_mode);

/// Columns sample_id, f, abs_error, bound, covered.
void write_coverage_csv(const std::filesystem::path& path, const CoverageReport& report);

/// y = Zψ* + ζ with standard normal Z and ψ*, ζ ~ N(0, noise_std²).
struct SyntheticLinear {
  Eigen::MatrixXd z;
  Eigen::VectorXd psi_star;
  Eigen::VectorXd zeta;
  Eigen::VectorXd y;
};

SyntheticLinear make_synthetic_linear(std::size_t n, std::size_t dim, double noise_std, std::uint64_t seed);

}  // namespace trustalign::reward
