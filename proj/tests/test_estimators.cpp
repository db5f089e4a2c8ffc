#include "coupled_is/estimators.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace coupled_is;
using namespace coupled_is::testing;

namespace {

TargetProblem standard_normal_problem(std::function<double(const VectorXd&)> f) {
  TargetProblem p;
  p.dim = 1;
  p.log_p_tilde = [](const VectorXd& x) { return -0.5 * x.squaredNorm() - 0.5 * std::log(2.0 * std::numbers::pi); };
  p.log_f = log_of_test_function(std::move(f));
  p.log_normalizer = 0.0;
  return p;
}

MarginalTransport normal_1d(double mean, double var) {
  return MarginalTransport::gaussian(GaussianDist(VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, var)));
}

}  // namespace

TEST_CASE("UIS with q = p and f = 1 gives one") {
  const auto q = normal_1d(0.0, 1.0);
  TargetProblem p;
  p.dim = 1;
  p.log_p_tilde = [q](const VectorXd& x) { return q.log_pdf(x); };
  p.log_f = [](const VectorXd&) { return 0.0; };
  p.log_normalizer = 0.0;
  Rng rng(1);
  CHECK(uis_estimate(p, q, 1000, rng).estimate == doctest::Approx(1.0).epsilon(1e-14));
  p.log_normalizer.reset();
  CHECK_THROWS_AS(uis_estimate(p, q, 10, rng), std::invalid_argument);
}

TEST_CASE("UIS under the optimal proposal has zero variance") {
  const auto fx = make_blr_fixture();
  Rng rng(2);
  const auto r = uis_estimate(fx.problem, MarginalTransport::gaussian(fx.optimal.q1s), 1000, rng);
  const VectorXd terms = r.log_w1.array().exp();
  CHECK((terms.array() / fx.mu - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("UIS on the regression problem with the posterior as proposal") {
  const auto fx = make_blr_fixture();
  Rng rng(3);
  const auto r = uis_estimate(fx.problem, MarginalTransport::gaussian(fx.optimal.q2s), 100000, rng);
  CHECK(std::abs(r.estimate - fx.mu) < 4.0 * r.std_err);
}

TEST_CASE("SNIS basics") {
  Rng rng(4);
  const auto q = normal_1d(0.3, 2.0);
  const auto one = snis_estimate(standard_normal_problem([](const VectorXd&) { return 1.0; }), q, 500, rng);
  CHECK(one.estimate == 1.0);

  const auto sq = standard_normal_problem([](const VectorXd& x) { return x(0) * x(0); });
  Rng a(5), b(5);
  const auto base = snis_estimate(sq, q, 1000, a);
  const auto scaled = snis_estimate(sq.scaled(1e10), q, 1000, b);
  CHECK(base.estimate == scaled.estimate);
  CHECK(scaled.numerator / base.numerator == doctest::Approx(1e10));

  Rng c(6);
  const auto big = snis_estimate(sq, normal_1d(0.0, 2.0), 1000000, c);
  CHECK(std::abs(big.estimate - 1.0) < 4.0 * big.std_err);
}

TEST_CASE("SNIS rejects a proposal that misses the target") {
  TargetProblem p;
  p.dim = 1;
  p.log_p_tilde = [](const VectorXd& x) {
    return x(0) > 1e6 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  p.log_f = [](const VectorXd&) { return 0.0; };
  Rng rng(7);
  CHECK_THROWS_AS(snis_estimate(p, normal_1d(0.0, 1.0), 100, rng), std::domain_error);
}

TEST_CASE("non-finite weights name the stream and sample") {
  TargetProblem p = standard_normal_problem([](const VectorXd&) { return 1.0; });
  p.log_p_tilde = [](const VectorXd& x) { return x(0) > 0.0 ? std::nan("") : 0.0; };
  Rng rng(8);
  try {
    (void)snis_estimate(p, normal_1d(0.0, 1.0), 100, rng);
    FAIL("expected NonFiniteWeight");
  } catch (const NonFiniteWeight& e) {
    CHECK(e.stream() == "snis");
  }
}

TEST_CASE("negative test function is rejected") {
  Rng rng(9);
  const auto p = standard_normal_problem([](const VectorXd& x) { return x(0); });
  CHECK_THROWS_AS(snis_estimate(p, normal_1d(0.0, 1.0), 100, rng), NegativeTestFunction);
}

TEST_CASE("GenSNIS with equal marginals and CRN equals SNIS") {
  const auto fx = make_blr_fixture();
  const auto q = MarginalTransport::gaussian(fx.q2);
  Rng a(10), b(10);
  const auto snis = snis_estimate(fx.problem, q, 5000, a);
  const auto gen = gensnis_estimate(fx.problem, JointProposal(q, q, Coupling::crn(2)), 5000, b);
  CHECK(gen.estimate == doctest::Approx(snis.estimate).epsilon(1e-12));
}

TEST_CASE("GenSNIS with q2 = p approaches the UIS row") {
  const auto fx = make_blr_fixture();
  Rng rng(11);
  const JointProposal jp(MarginalTransport::gaussian(fx.q1), MarginalTransport::gaussian(fx.optimal.q2s),
                         Coupling::crn(2));
  const auto r = gensnis_estimate(fx.problem, jp, 1000000, rng);
  CHECK(std::abs(r.estimate - fx.mu) < 4.0 * r.std_err);
}

TEST_CASE("GenSNIS with the optimal marginals is exact for every coupling") {
  const auto fx = make_blr_fixture();
  const auto t1 = MarginalTransport::gaussian(fx.optimal.q1s);
  const auto t2 = MarginalTransport::gaussian(fx.optimal.q2s);
  Rng rng(12);
  for (const auto& c : {Coupling::crn(2), Coupling::antithetic(2), Coupling::independent(2),
                        Coupling::gaussian(GaussianCouplingParams::diagonal(VectorXd::Constant(2, 0.4)))}) {
    for (Eigen::Index n : {1, 10, 1000}) {
      const auto r = gensnis_estimate(fx.problem, JointProposal(t1, t2, c), n, rng);
      CHECK(r.estimate == doctest::Approx(fx.mu).epsilon(1e-10));
    }
  }
}

TEST_CASE("recycled estimator: SNIS special case and consistency") {
  const auto fx = make_blr_fixture();
  const auto q = MarginalTransport::gaussian(fx.q2);
  Rng a(13), b(13);
  const auto snis = snis_estimate(fx.problem, q, 3000, a);
  const auto rec = gensnis_recycled(fx.problem, JointProposal(q, q, Coupling::crn(2)), 3000, b);
  CHECK(rec.estimate == doctest::Approx(snis.estimate).epsilon(1e-12));

  // With the optimal marginals every stream-1 summand ratio is mu, but the
  // mixed sums are not, so the recycled estimate is only consistent.
  Rng c(14);
  const JointProposal opt(MarginalTransport::gaussian(fx.optimal.q1s), MarginalTransport::gaussian(fx.optimal.q2s),
                          Coupling::independent(2));
  const auto r = gensnis_recycled(fx.problem, opt, 200000, c);
  CHECK(std::abs(r.estimate - fx.mu) < 5.0 * r.std_err);
}

TEST_CASE("recycled MSE stays within twice the GenSNIS MSE") {
  const auto fx = make_blr_fixture();
  const JointProposal jp(MarginalTransport::gaussian(fx.q1), MarginalTransport::gaussian(fx.q2),
                         Coupling::independent(2));
  double mse_gen = 0.0, mse_rec = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    Rng a(stream_seed(15, r)), b(stream_seed(16, r));
    mse_gen += std::pow(gensnis_estimate(fx.problem, jp, 100000, a).estimate - fx.mu, 2);
    mse_rec += std::pow(gensnis_recycled(fx.problem, jp, 100000, b).estimate - fx.mu, 2);
  }
  CHECK(mse_rec < 2.0 * mse_gen);
}

TEST_CASE("consistency as n grows") {
  const auto fx = make_blr_fixture();
  const auto t1 = MarginalTransport::gaussian(fx.q1);
  const auto t2 = MarginalTransport::gaussian(fx.q2);
  const JointProposal jp(t1, t2, Coupling::independent(2));
  double last_se = std::numeric_limits<double>::infinity();
  for (Eigen::Index n : {1000, 10000, 100000, 1000000}) {
    Rng rng(stream_seed(17, static_cast<std::uint64_t>(n)));
    const auto r = gensnis_estimate(fx.problem, jp, n, rng);
    CHECK(r.std_err < last_se);
    last_se = r.std_err;
    if (n == 1000000) {
      CHECK(std::abs(r.estimate - fx.mu) < 5.0 * r.std_err);
      Rng a(18), b(19);
      const auto s = snis_estimate(fx.problem, t2, n, a);
      CHECK(std::abs(s.estimate - fx.mu) < 5.0 * s.std_err);
      const auto u = uis_estimate(fx.problem, t1, n, b);
      CHECK(std::abs(u.estimate - fx.mu) < 5.0 * u.std_err);
    }
  }
}

TEST_CASE("numerator and denominator are unbiased and coupling-invariant") {
  const auto fx = make_blr_fixture();
  const double z = std::exp(*fx.problem.log_normalizer);
  const double i = fx.mu * z;
  const auto t1 = MarginalTransport::gaussian(fx.q1);
  const auto t2 = MarginalTransport::gaussian(fx.q2);
  for (const auto& c : {Coupling::crn(2), Coupling::antithetic(2), Coupling::independent(2),
                        Coupling::gaussian(GaussianCouplingParams::diagonal(VectorXd::Constant(2, -0.7)))}) {
    const JointProposal jp(t1, t2, c);
    const int reps = 2000;
    VectorXd nums(reps), dens(reps);
    for (int r = 0; r < reps; ++r) {
      Rng rng(stream_seed(20, r));
      const auto est = gensnis_estimate(fx.problem, jp, 200, rng);
      nums(r) = est.numerator;
      dens(r) = est.denominator;
    }
    auto se = [](const VectorXd& v) {
      return std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1) / v.size());
    };
    CHECK(std::abs(nums.mean() - i) < 4.0 * se(nums));
    CHECK(std::abs(dens.mean() - z) < 4.0 * se(dens));
  }
}
