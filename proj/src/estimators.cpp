#include "coupled_is/estimators.hpp"

#include "coupled_is/special.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace coupled_is {

namespace {

double lse(const VectorXd& v) { return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

void require_n(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("estimator: n must be >= 1");
}

}  // namespace

JointProposal::JointProposal(MarginalTransport q1, MarginalTransport q2, Coupling c)
    : t1(std::move(q1)), t2(std::move(q2)), coupling(std::move(c)) {
  detail::require_same_dim(t1.dim(), t2.dim(), "JointProposal marginals");
  detail::require_same_dim(t1.dim(), coupling.dim(), "JointProposal coupling");
}

VectorXd log_weights(const TargetProblem& problem, const MarginalTransport& q, const MatrixXd& x, bool with_f,
                     const std::string& stream) {
  VectorXd lw(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const VectorXd xi = x.row(i).transpose();
    double v = problem.log_p_tilde(xi) - q.log_pdf(xi);
    if (with_f) v += problem.log_f(xi);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NonFiniteWeight(stream, static_cast<std::size_t>(i), v);
    }
    lw(i) = v;
  }
  return lw;
}

EstimateResult ratio_from_log_weights(const TargetProblem& problem, VectorXd log_w1, VectorXd log_w2) {
  const Eigen::Index n = log_w1.size();
  detail::require_same_dim(n, log_w2.size(), "ratio_from_log_weights");
  const double log_n = std::log(static_cast<double>(n));
  const double m1 = lse(log_w1);
  const double m2 = lse(log_w2);
  if (m2 == -std::numeric_limits<double>::infinity()) {
    throw std::domain_error("all denominator weights are zero: the proposal missed the target");
  }
  EstimateResult r;
  r.n = n;
  r.log_numerator = problem.log_scale + m1 - log_n;
  r.log_denominator = problem.log_scale + m2 - log_n;
  r.numerator = std::exp(r.log_numerator);
  r.denominator = std::exp(r.log_denominator);
  r.estimate = std::exp(m1 - m2);
  if (n > 1) {
    // (a_i - mu b_i) / mean(b) with both weight vectors normalized to sum one.
    const VectorXd a = (log_w1.array() - m1).exp();
    const VectorXd b = (log_w2.array() - m2).exp();
    const double rho = m1 == -std::numeric_limits<double>::infinity() ? 0.0 : 1.0;
    const VectorXd resid = static_cast<double>(n) * (rho * a - b);
    const double var = resid.squaredNorm() / static_cast<double>(n - 1);
    r.std_err = r.estimate * std::sqrt(var / static_cast<double>(n));
  }
  r.log_w1 = std::move(log_w1);
  r.log_w2 = std::move(log_w2);
  return r;
}

EstimateResult uis_estimate(const TargetProblem& problem, const MarginalTransport& q, Eigen::Index n, Rng& rng) {
  require_n(n);
  if (!problem.log_normalizer) throw std::invalid_argument("uis_estimate: problem has no known normalizer");
  const MatrixXd x = q.forward_from_normal_rows(standard_normal_rows(rng, n, q.dim()));
  VectorXd lw = log_weights(problem, q, x, true, "uis");
  lw.array() -= *problem.log_normalizer;
  const VectorXd w = lw.array().exp();
  EstimateResult r;
  r.n = n;
  r.estimate = w.mean();
  r.numerator = r.estimate;
  r.log_numerator = std::log(r.estimate);
  r.denominator = 1.0;
  if (n > 1) r.std_err = std::sqrt((w.array() - r.estimate).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
  r.log_w1 = lw;
  r.log_w2 = VectorXd::Zero(n);
  return r;
}

EstimateResult snis_estimate(const TargetProblem& problem, const MarginalTransport& q, Eigen::Index n, Rng& rng) {
  require_n(n);
  const MatrixXd x = q.forward_from_normal_rows(standard_normal_rows(rng, n, q.dim()));
  VectorXd lw2 = log_weights(problem, q, x, false, "snis");
  VectorXd lw1(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lw1(i) = lw2(i) + problem.log_f(x.row(i).transpose());
    if (std::isnan(lw1(i)) || lw1(i) == std::numeric_limits<double>::infinity()) {
      throw NonFiniteWeight("snis numerator", static_cast<std::size_t>(i), lw1(i));
    }
  }
  return ratio_from_log_weights(problem, std::move(lw1), std::move(lw2));
}

EstimateResult gensnis_estimate(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n, Rng& rng) {
  require_n(n);
  const SamplePair z = jp.coupling.sample_normal(rng, n);
  const MatrixXd x1 = jp.t1.forward_from_normal_rows(z.first);
  const MatrixXd x2 = jp.t2.forward_from_normal_rows(z.second);
  return ratio_from_log_weights(problem, log_weights(problem, jp.t1, x1, true, "numerator"),
                                log_weights(problem, jp.t2, x2, false, "denominator"));
}

EstimateResult gensnis_recycled(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n, Rng& rng) {
  require_n(n);
  const SamplePair z = jp.coupling.sample_normal(rng, n);
  const MatrixXd x1 = jp.t1.forward_from_normal_rows(z.first);
  const MatrixXd x2 = jp.t2.forward_from_normal_rows(z.second);
  const VectorXd p1 = log_weights(problem, jp.t1, x1, false, "stream 1");
  const VectorXd p2 = log_weights(problem, jp.t2, x2, false, "stream 2");
  VectorXd num(2 * n), den(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    num(i) = p1(i) + problem.log_f(x1.row(i).transpose());
    num(n + i) = p2(i) + problem.log_f(x2.row(i).transpose());
  }
  den << p2, p1;
  return ratio_from_log_weights(problem, std::move(num), std::move(den));
}

}  // namespace coupled_is
