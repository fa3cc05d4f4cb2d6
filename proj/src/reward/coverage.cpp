#include "trustalign/reward/coverage.hpp"

#include <fstream>
#include <random>

#include "trustalign/errors.hpp"

namespace trustalign::reward {

CoverageReport coverage_report(const GramState& head, const BoundConstant& bound, const Eigen::MatrixXd& z,
                               const Eigen::VectorXd& truth, NormMode mode) {
  require(z.rows() == truth.size(), "coverage_report: feature/truth count mismatch");
  CoverageReport report;
  report.c_bound = bound.c_bound;
  report.mode = mode;
  std::size_t covered = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::VectorXd zi = z.row(i).transpose();
    CoverageRow row;
    row.sample_id = static_cast<std::size_t>(i);
    row.f = head.confidence_norm(zi, mode);
    row.abs_error = std::abs(head.predict(zi) - truth(i));
    row.bound = row.f * bound.c_bound;
    row.covered = row.abs_error <= row.bound;
    covered += row.covered ? 1 : 0;
    report.rows.push_back(row);
  }
  report.coverage = report.rows.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(report.rows.size());
  return report;
}

CoverageReport verify_bound(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& heldout,
                            const dataset::NormalizationTable& table, dataset::NormalizationMode norm_mode) {
  require(net.fitted(), "reward net head is not fitted");
  require(!heldout.empty(), "verify_bound needs held-out records");
  const Eigen::MatrixXd z = to_eigen(net.features(record_rows(net, heldout)));
  Eigen::VectorXd truth(static_cast<Eigen::Index>(heldout.size()));
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    truth(static_cast<Eigen::Index>(i)) =
        dataset::normalize_score(heldout[i].oracle_clean, table, heldout[i].split_tag, norm_mode);
  }
  return coverage_report(net.ridge(), net.bound(), z, truth, net.config().norm_mode);
}

void write_coverage_csv(const std::filesystem::path& path, const CoverageReport& report) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  out.precision(17);
  out << "sample_id,f,abs_error,bound,covered\n";
  for (const auto& r : report.rows) {
    out << r.sample_id << ',' << r.f << ',' << r.abs_error << ',' << r.bound << ',' << (r.covered ? 1 : 0) << '\n';
  }
}

SyntheticLinear make_synthetic_linear(std::size_t n, std::size_t dim, double noise_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticLinear s;
  const auto rows = static_cast<Eigen::Index>(n), cols = static_cast<Eigen::Index>(dim);
  s.z.resize(rows, cols);
  s.psi_star.resize(cols);
  s.zeta.resize(rows);
  for (Eigen::Index j = 0; j < cols; ++j) s.psi_star(j) = normal(rng);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) s.z(i, j) = normal(rng);
  }
  for (Eigen::Index i = 0; i < rows; ++i) s.zeta(i) = noise_std * normal(rng);
  s.y = s.z * s.psi_star + s.zeta;
  return s;
}

}  // namespace trustalign::reward
