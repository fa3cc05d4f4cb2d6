#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trustalign/dataset/masks.hpp"
#include "trustalign/dataset/toy_images.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/reward/coverage.hpp"
#include "trustalign/reward/reward_net.hpp"
#include "trustalign/reward/ridge.hpp"

using namespace trustalign;
using namespace trustalign::reward;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

RewardNetConfig small_net_config() {
  RewardNetConfig c;
  c.height = c.width = 8;
  c.hidden = {16};
  c.feature_dim = 6;
  c.iterations = 30;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

std::vector<dataset::AnnotationRecord> image_records(std::size_t n, std::uint64_t seed) {
  const auto images = dataset::gen_toy_images(n, dataset::ImageKind::shapes, seed, 8);
  std::vector<dataset::AnnotationRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].prompt_id = static_cast<std::int64_t>(i);
    out[i].split_tag = "shapes/warping";
    out[i].image = images[i];
    out[i].mask = dataset::gen_mask(dataset::MaskSpec::random(dataset::MaskKind::irregular, seed + i), 8);
  }
  return out;
}

}  // namespace

TEST_CASE("fit_ridge hand examples") {
  const auto one = fit_ridge(Eigen::MatrixXd::Ones(1, 1), vec({1.0}), 1.0);
  CHECK(std::abs(one.psi_hat()(0) - 0.5) < 1e-10);
  CHECK(one.v()(0, 0) == 2.0);

  const auto id = fit_ridge(Eigen::MatrixXd::Identity(2, 2), vec({2.0, 4.0}), 1.0);
  CHECK(std::abs(id.psi_hat()(0) - 1.0) < 1e-10);
  CHECK(std::abs(id.psi_hat()(1) - 2.0) < 1e-10);

  const auto data = make_synthetic_linear(50, 4, 0.1, 1);
  CHECK(fit_ridge(data.z, data.y, 1e9).psi_hat().norm() < 1e-6);

  CHECK_THROWS_AS(fit_ridge(data.z, data.y, 0.0), ValidationError);
  CHECK_THROWS_AS(fit_ridge(data.z, data.y, -1.0), ValidationError);
  Eigen::MatrixXd bad = data.z;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_ridge(bad, data.y, 1.0), ValidationError);
}

TEST_CASE("fit_ridge minimises the penalised objective") {
  const auto data = make_synthetic_linear(40, 3, 0.5, 2);
  const double lambda = 0.7;
  const auto head = fit_ridge(data.z, data.y, lambda);
  const auto objective = [&](const Eigen::VectorXd& psi) {
    return (data.z * psi - data.y).squaredNorm() + lambda * psi.squaredNorm();
  };
  const double best = objective(head.psi_hat());
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd p = head.psi_hat();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += n(rng);
    CHECK(objective(p) > best);
  }
}

TEST_CASE("ridge identity with known psi* and noise") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = make_synthetic_linear(120, 6, 0.4, seed);
    const double lambda = 0.3 + static_cast<double>(seed);
    const auto head = fit_ridge(d.z, d.y, lambda);
    const Eigen::VectorXd lhs = head.psi_hat() - d.psi_star;
    const Eigen::VectorXd rhs = head.solve(d.z.transpose() * d.zeta) - lambda * head.solve(d.psi_star);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("fit_ridge is invariant to row permutation") {
  const auto d = make_synthetic_linear(60, 5, 0.2, 7);
  std::vector<Eigen::Index> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Eigen::MatrixXd z(60, 5);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    z.row(i) = d.z.row(perm[i]);
    y(i) = d.y(perm[i]);
  }
  const auto a = fit_ridge(d.z, d.y, 1.0);
  const auto b = fit_ridge(z, y, 1.0);
  CHECK((a.psi_hat() - b.psi_hat()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("predict") {
  const auto id = fit_ridge(Eigen::MatrixXd::Identity(2, 2), vec({2.0, 4.0}), 1.0);
  CHECK(id.predict(Eigen::VectorXd::Zero(2)) == 0.0);
  CHECK(id.predict(vec({3.0, 4.0})) == doctest::Approx(11.0).epsilon(1e-12));
  CHECK_THROWS_AS(id.predict(vec({1.0})), ValidationError);

  const auto d = make_synthetic_linear(30, 4, 0.3, 3);
  const auto head = fit_ridge(d.z, d.y, 1.0);
  const Eigen::VectorXd z1 = d.z.row(0).transpose(), z2 = d.z.row(1).transpose();
  const double a = 1.7, b = -0.4;
  CHECK(std::abs(head.predict(a * z1 + b * z2) - (a * head.predict(z1) + b * head.predict(z2))) < 1e-10);
}

TEST_CASE("confidence_norm") {
  const auto id = fit_ridge(Eigen::MatrixXd::Identity(2, 2), vec({2.0, 4.0}), 1.0);
  CHECK(id.confidence_norm(vec({1.0, 0.0})) == doctest::Approx(0.5));
  CHECK(id.confidence_norm(vec({1.0, 0.0}), NormMode::elliptic) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(id.confidence_norm(Eigen::VectorXd::Zero(2)) == 0.0);
  CHECK(id.confidence_norm(Eigen::VectorXd::Zero(2), NormMode::elliptic) == 0.0);

  // no data: V = λI
  const double lambda = 4.0;
  const auto empty = fit_ridge(Eigen::MatrixXd::Zero(1, 3), vec({0.0}), lambda);
  const auto z = vec({1.0, -2.0, 2.0});
  CHECK(empty.confidence_norm(z) == doctest::Approx(z.norm() / lambda));
}

TEST_CASE("bound_constant") {
  const auto one = fit_ridge(Eigen::MatrixXd::Ones(1, 1), vec({1.0}), 1.0);
  const auto c = bound_constant(one, 1.0, 0.1, 1.0);
  CHECK(c.c_bound == doctest::Approx(std::sqrt(2.0 * std::log(std::sqrt(2.0) / 0.1)) + 1.0));
  CHECK(c.c_bound == doctest::Approx(3.3018).epsilon(1e-4));

  const double lambda = 2.5;
  const auto empty = fit_ridge(Eigen::MatrixXd::Zero(1, 3), vec({0.0}), lambda);
  const auto e = bound_constant(empty, 0.8, 0.05, 1.5);
  CHECK(e.c_bound == doctest::Approx(0.8 * std::sqrt(2.0 * std::log(1.0 / 0.05)) + std::sqrt(lambda) * 1.5));
  CHECK(bound_constant(empty, 0.8, 1.0, 1.5).c_bound == doctest::Approx(std::sqrt(lambda) * 1.5));

  const auto d = make_synthetic_linear(80, 5, 0.3, 2);
  const auto head = fit_ridge(d.z, d.y, lambda);
  CHECK(bound_constant(head, 0.3, 0.1, 2.0).c_bound >= std::sqrt(lambda) * 2.0);

  CHECK_THROWS_AS(bound_constant(head, 1.0, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(bound_constant(head, 1.0, 1.5, 1.0), ValidationError);
  CHECK_THROWS_AS(bound_constant(head, -1.0, 0.1, 1.0), ValidationError);
  CHECK_THROWS_AS(bound_constant(head, 1.0, 0.1, -1.0), ValidationError);
}

TEST_CASE("error_bound is homogeneous") {
  const auto d = make_synthetic_linear(80, 5, 0.3, 2);
  const auto head = fit_ridge(d.z, d.y, 1.0);
  const auto c = bound_constant(head, 0.3, 0.1, head.psi_hat().norm());
  const Eigen::VectorXd z = d.z.row(3).transpose();
  for (auto mode : {NormMode::inverse, NormMode::elliptic}) {
    CHECK(error_bound(head, c, Eigen::VectorXd::Zero(5), mode) == 0.0);
    CHECK(error_bound(head, c, 2.0 * z, mode) == doctest::Approx(2.0 * error_bound(head, c, z, mode)));
    CHECK(error_bound(head, c, z, mode) == doctest::Approx(head.confidence_norm(z, mode) * c.c_bound));
  }
}

TEST_CASE("deterministic Cauchy-Schwarz bound in the elliptic norm") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = make_synthetic_linear(200, 8, 0.3, seed);
    const double lambda = 1.0;
    const auto head = fit_ridge(d.z, d.y, lambda);
    const Eigen::VectorXd ztz = d.z.transpose() * d.zeta;
    const double radius =
        head.confidence_norm(ztz, NormMode::elliptic) + std::sqrt(lambda) * d.psi_star.norm();
    const auto probe = make_synthetic_linear(100, 8, 0.0, seed + 100);
    for (Eigen::Index i = 0; i < probe.z.rows(); ++i) {
      const Eigen::VectorXd z = probe.z.row(i).transpose();
      const double err = std::abs(z.dot(head.psi_hat() - d.psi_star));
      CHECK(err <= head.confidence_norm(z, NormMode::elliptic) * radius + 1e-12);
    }
  }
}

TEST_CASE("concentration radius is exceeded at most delta of the time") {
  const double noise = 0.3, delta = 0.1;
  int exceed = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const auto d = make_synthetic_linear(500, 8, noise, 1000 + t);
    const auto head = fit_ridge(d.z, d.y, 1.0);
    const auto c = bound_constant(head, noise, delta, 0.0);
    const Eigen::VectorXd ztz = d.z.transpose() * d.zeta;
    if (head.confidence_norm(ztz, NormMode::elliptic) > c.c_bound) ++exceed;
  }
  CHECK(static_cast<double>(exceed) / trials <= delta + 0.05);
}

TEST_CASE("coverage report") {
  SUBCASE("noiseless data, tiny lambda") {
    const auto d = make_synthetic_linear(100, 4, 0.0, 1);
    const auto head = fit_ridge(d.z, d.y, 1e-8);
    const auto c = bound_constant(head, 0.0, 0.1, head.psi_hat().norm());
    const auto probe = make_synthetic_linear(50, 4, 0.0, 2);
    const Eigen::VectorXd truth = probe.z * d.psi_star;
    const auto rep = coverage_report(head, c, probe.z, truth, NormMode::inverse);
    CHECK(rep.coverage == 1.0);
    for (const auto& r : rep.rows) CHECK(r.abs_error < 1e-6);
  }
  SUBCASE("noisy data, elliptic") {
    const auto d = make_synthetic_linear(500, 8, 0.3, 4);
    const auto head = fit_ridge(d.z, d.y, 1.0);
    const auto c = bound_constant(head, 0.3, 0.1, d.psi_star.norm());
    const auto probe = make_synthetic_linear(200, 8, 0.0, 5);
    const auto rep = coverage_report(head, c, probe.z, probe.z * d.psi_star, NormMode::elliptic);
    CHECK(rep.coverage >= 0.9);
    CHECK(rep.mode == NormMode::elliptic);
    auto rows = rep.rows;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.f < b.f; });
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].bound >= rows[i - 1].bound);
    std::size_t covered = 0;
    for (const auto& r : rep.rows) {
      CHECK(r.covered == (r.abs_error <= r.bound));
      covered += r.covered;
    }
    CHECK(rep.coverage == doctest::Approx(static_cast<double>(covered) / 200.0));
  }
}

TEST_CASE("ranking_accuracy") {
  CHECK(ranking_accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(ranking_accuracy({3, 2, 1}, {1, 2, 3}) == 0.0);
  CHECK(ranking_accuracy({1, 1, 1}, {1, 2, 3}) == 0.5);
  // truth ties are skipped: only (0,2) and (1,2) count
  CHECK(ranking_accuracy({1, 3, 2}, {1, 1, 2}) == 0.5);
}

TEST_CASE("reward net config validation") {
  auto c = small_net_config();
  c.fix_rate = 1.5;
  CHECK_THROWS_AS(RewardNet{c}, ValidationError);
  CHECK_THROWS_AS(train_extractor({}, small_net_config()), ValidationError);
  const auto back = RewardNetConfig::from_json(small_net_config().to_json());
  CHECK(back.to_json() == small_net_config().to_json());
}

TEST_CASE("fix_rate 1 leaves the extractor untouched") {
  auto c = small_net_config();
  c.fix_rate = 1.0;
  auto recs = image_records(40, 1);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].normalized = static_cast<double>(i % 5) - 2.0;
    recs[i].aggregate = static_cast<double>(i % 5) + 1.0;
  }
  const RewardNet fresh(c);
  ExtractorReport rep;
  const auto net = train_extractor(recs, c, &rep);
  CHECK(rep.frozen_layers == c.extractor_layers());
  for (const auto& e : fresh.params().entries()) {
    if (e.name.rfind(RewardNet::kExtractor, 0) == 0) CHECK(net.params().get(e.name) == e.value);
  }
  CHECK(net.fitted());
}

TEST_CASE("realizable ridge head recovers a linear target") {
  auto c = small_net_config();
  c.fix_rate = 1.0;
  c.lambda = 1e-8;
  const RewardNet fresh(c);
  const Eigen::VectorXd w = vec({0.5, -1.0, 0.25, 2.0, -0.75, 1.0});
  auto recs = image_records(200, 2);
  for (auto& r : recs) r.normalized = fresh.feature(r.image, r.mask).dot(w);
  const std::vector<dataset::AnnotationRecord> train(recs.begin(), recs.begin() + 150);
  const auto net = train_extractor(train, c);
  double mse = 0.0;
  for (std::size_t i = 150; i < recs.size(); ++i) {
    const double e = net.reward(recs[i].image, recs[i].mask) - recs[i].normalized;
    mse += e * e;
  }
  CHECK(mse / 50.0 < 1e-3);
}

TEST_CASE("reward net checkpoint round trip") {
  auto c = small_net_config();
  c.mode = RewardMode::classification;
  auto recs = image_records(30, 3);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].aggregate = 1.0 + static_cast<double>(i % 7);
    recs[i].normalized = recs[i].aggregate / 7.0;
  }
  const auto net = train_extractor(recs, c);
  const auto back = RewardNet::from_checkpoint(net.to_checkpoint());
  CHECK(back.params() == net.params());
  CHECK(back.config().to_json() == net.config().to_json());
  CHECK(back.bound().c_bound == net.bound().c_bound);
  for (const auto& r : recs) {
    CHECK(back.reward(r.image, r.mask) == net.reward(r.image, r.mask));
    CHECK(back.confidence(r.image, r.mask) == net.confidence(r.image, r.mask));
  }
  const auto rows = record_rows(net, recs);
  for (double s : net.native_scores(rows)) {
    CHECK(s >= 1.0);
    CHECK(s <= 7.0);
  }
}
