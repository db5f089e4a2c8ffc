#include "coupled_is/coupling.hpp"
#include "coupled_is/special.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace coupled_is;

namespace {

// Kolmogorov-Smirnov statistic of a sample against Uniform(0,1).
double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic KS critical value at significance 0.001.
double ks_critical(double n) { return 1.9495 / std::sqrt(n); }

void check_uniform_marginals(const Coupling& c, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index n = 100000;
  const SamplePair p = c.sample_pair(rng, n);
  for (Eigen::Index j = 0; j < c.dim(); ++j) {
    for (const MatrixXd* m : {&p.first, &p.second}) {
      std::vector<double> col(m->col(j).data(), m->col(j).data() + n);
      CHECK(ks_uniform(col) < ks_critical(static_cast<double>(n)));
    }
  }
}

double correlation(const VectorXd& a, const VectorXd& b) {
  const VectorXd ac = a.array() - a.mean();
  const VectorXd bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

}  // namespace

TEST_CASE("orthogonal_from_skew") {
  CHECK((orthogonal_from_skew(MatrixXd::Zero(3, 3)) - MatrixXd::Identity(3, 3)).norm() == 0.0);
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 0.3;
  const MatrixXd q = orthogonal_from_skew(a);
  // expm([[0, -0.3], [0.3, 0]]) from scipy.linalg.expm.
  CHECK(q(0, 0) == doctest::Approx(0.955336489125606).epsilon(1e-14));
  CHECK(q(0, 1) == doctest::Approx(-0.29552020666133966).epsilon(1e-14));
  CHECK(q(1, 0) == doctest::Approx(0.2955202066613396).epsilon(1e-14));
  CHECK(q(1, 1) == doctest::Approx(0.955336489125606).epsilon(1e-14));

  Rng rng(53);
  MatrixXd a5 = standard_normal_rows(rng, 5, 5).triangularView<Eigen::StrictlyLower>();
  const MatrixXd q5 = orthogonal_from_skew(a5);
  CHECK((q5.transpose() * q5 - MatrixXd::Identity(5, 5)).norm() < 1e-10);
  CHECK(q5.determinant() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("skew exponential adjoint matches finite differences") {
  Rng rng(59);
  const MatrixXd a = standard_normal_rows(rng, 4, 4).triangularView<Eigen::StrictlyLower>();
  const MatrixXd w = standard_normal_rows(rng, 4, 4);
  auto loss = [&](const MatrixXd& x) { return (orthogonal_from_skew(x).array() * w.array()).sum(); };
  const MatrixXd grad = orthogonal_from_skew_adjoint(a, w);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (j >= i) {
        CHECK(grad(i, j) == 0.0);
        continue;
      }
      MatrixXd ap = a, am = a;
      ap(i, j) += 1e-5;
      am(i, j) -= 1e-5;
      const double fd = (loss(ap) - loss(am)) / 2e-5;
      CHECK(std::abs(grad(i, j) - fd) < 1e-8 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("params flatten round trip and S_c construction") {
  Rng rng(61);
  GaussianCouplingParams p{standard_normal_rows(rng, 3, 3).triangularView<Eigen::StrictlyLower>(),
                           standard_normal_rows(rng, 3, 3).triangularView<Eigen::StrictlyLower>(),
                           VectorXd::Random(3)};
  const auto back = GaussianCouplingParams::unflatten(p.flatten(), 3);
  CHECK((back.a_u - p.a_u).norm() == 0.0);
  CHECK((back.a_v - p.a_v).norm() == 0.0);
  CHECK((back.v - p.v).norm() == 0.0);
  const MatrixXd s = p.s_c();
  const MatrixXd u = p.u(), v = p.v_mat();
  CHECK((u.transpose() * s * v - MatrixXd(p.sigma().asDiagonal())).norm() < 1e-12);
  MatrixXd big(6, 6);
  big << MatrixXd::Identity(3, 3), s.transpose(), s, MatrixXd::Identity(3, 3);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(big);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("special cases of the Gaussian coupling") {
  Rng rng(67);
  const auto same = Coupling::gaussian(MatrixXd::Identity(3, 3)).sample_pair(rng, 1000);
  CHECK((same.first - same.second).norm() == 0.0);
  const auto anti = Coupling::gaussian(-MatrixXd::Identity(3, 3)).sample_pair(rng, 1000);
  CHECK((anti.first + anti.second - MatrixXd::Ones(1000, 3)).cwiseAbs().maxCoeff() < 1e-15);

  const auto indep = Coupling::gaussian(MatrixXd::Zero(1, 1)).sample_normal(rng, 100000);
  CHECK(std::abs(correlation(indep.first.col(0), indep.second.col(0))) < 4.0 / std::sqrt(100000.0));

  CHECK_THROWS_AS(Coupling::gaussian(MatrixXd::Identity(1, 1) * 1.1), NotPositiveDefinite);
}

TEST_CASE("orthogonal S_c makes the second block deterministic") {
  Rng rng(71);
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 0.8;
  const MatrixXd q = orthogonal_from_skew(a);
  const Coupling c = Coupling::gaussian(q);
  CHECK(c.deterministic());
  const auto p = c.sample_normal(rng, 500);
  CHECK((p.second - p.first * q.transpose()).norm() < 1e-12);
}

TEST_CASE("1D correlation equals sigma") {
  Rng rng(73);
  for (double sigma : {-0.6, 0.3, 0.9}) {
    const auto c = Coupling::gaussian(GaussianCouplingParams::diagonal(VectorXd::Constant(1, std::atanh(sigma))));
    const auto p = c.sample_normal(rng, 100000);
    const double se = (1.0 - sigma * sigma) / std::sqrt(100000.0);
    CHECK(std::abs(correlation(p.first.col(0), p.second.col(0)) - sigma) < 4.0 * se);
  }
}

TEST_CASE("every variant has uniform marginals") {
  Rng rng(79);
  GaussianCouplingParams params{standard_normal_rows(rng, 2, 2).triangularView<Eigen::StrictlyLower>(),
                                standard_normal_rows(rng, 2, 2).triangularView<Eigen::StrictlyLower>(),
                                (VectorXd(2) << 0.5, -1.0).finished()};
  const std::vector<Coupling> couplings{
      Coupling::crn(2), Coupling::antithetic(2), Coupling::independent(2),
      Coupling::sign_mask((VectorXd(2) << 1.0, -1.0).finished()), Coupling::gaussian(params),
      Coupling::mixture((VectorXd(2) << 0.3, 0.7).finished(), {Coupling::crn(2), Coupling::gaussian(params)})};
  std::uint64_t seed = 80;
  for (const auto& c : couplings) check_uniform_marginals(c, seed++);
}

TEST_CASE("log density reference and normalization") {
  const auto c = Coupling::gaussian(GaussianCouplingParams::diagonal(VectorXd::Constant(1, std::atanh(0.5))));
  const VectorXd half = VectorXd::Constant(1, 0.5);
  CHECK(c.log_density(half, half) == doctest::Approx(0.1438410362258904).epsilon(1e-12));

  const auto indep = Coupling::gaussian(MatrixXd::Zero(2, 2));
  CHECK(indep.log_density(VectorXd::Constant(2, 0.2), VectorXd::Constant(2, 0.9)) == doctest::Approx(0.0));
  CHECK(Coupling::independent(2).log_density(VectorXd::Constant(2, 0.2), VectorXd::Constant(2, 0.9)) ==
        doctest::Approx(0.0));

  CHECK_THROWS_AS(Coupling::crn(1).log_density(half, half), std::domain_error);
  CHECK_THROWS_AS(Coupling::antithetic(1).log_density(half, half), std::domain_error);

  Rng rng(89);
  std::uniform_real_distribution<double> unif(1e-12, 1.0);
  const int n = 1000000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::exp(c.log_density(VectorXd::Constant(1, unif(rng)), VectorXd::Constant(1, unif(rng))));
    const double delta = v - mean;
    mean += delta / (i + 1);
    m2 += delta * (v - mean);
  }
  CHECK(std::abs(mean - 1.0) < 3.0 * std::sqrt(m2 / (n - 1) / n));
}

TEST_CASE("mixture log density and stratified counts") {
  const auto a = Coupling::gaussian(GaussianCouplingParams::diagonal(VectorXd::Constant(1, 0.4)));
  const auto b = Coupling::independent(1);
  const auto mix = Coupling::mixture((VectorXd(2) << 0.25, 0.75).finished(), {a, b});
  const VectorXd u1 = VectorXd::Constant(1, 0.3), u2 = VectorXd::Constant(1, 0.6);
  CHECK(std::exp(mix.log_density(u1, u2)) ==
        doctest::Approx(0.25 * std::exp(a.log_density(u1, u2)) + 0.75).epsilon(1e-13));
  const auto counts = stratified_counts((VectorXd(3) << 0.5, 0.3, 0.2).finished(), 7);
  CHECK(counts[0] + counts[1] + counts[2] == 7);
  CHECK(counts[0] == 4);
  CHECK_THROWS(Coupling::mixture((VectorXd(2) << 0.5, 0.6).finished(), {a, b}));
}

TEST_CASE("JSON round trip") {
  Rng rng(97);
  GaussianCouplingParams params{standard_normal_rows(rng, 2, 2).triangularView<Eigen::StrictlyLower>(),
                                MatrixXd::Zero(2, 2), (VectorXd(2) << 0.1, 2.0).finished()};
  const std::vector<Coupling> couplings{
      Coupling::crn(2), Coupling::independent(2), Coupling::sign_mask((VectorXd(2) << -1.0, 1.0).finished()),
      Coupling::gaussian(params), Coupling::gaussian(0.5 * MatrixXd::Identity(2, 2)),
      Coupling::mixture((VectorXd(2) << 0.5, 0.5).finished(), {Coupling::antithetic(2), Coupling::gaussian(params)})};
  for (const auto& c : couplings) {
    const auto text = c.to_json().dump();
    const Coupling back = Coupling::from_json(nlohmann::json::parse(text));
    CHECK(back.kind() == c.kind());
    CHECK(back.to_json().dump() == text);
    if (c.kind() != CouplingKind::kMixture) CHECK((back.s_c() - c.s_c()).norm() == 0.0);
  }
  CHECK_THROWS_AS(Coupling::from_json(nlohmann::json::parse(R"({"variant":"bogus","d":1})")), std::invalid_argument);
}
