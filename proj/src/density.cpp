#include "coupled_is/density.hpp"

#include "coupled_is/special.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace coupled_is {

McEstimate chi2_monte_carlo(const std::function<double(const VectorXd&)>& log_p_num,
                            const std::function<double(const VectorXd&)>& log_q_den,
                            const std::function<VectorXd(Rng&)>& sample_q, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("chi2_monte_carlo: need at least 2 samples");
  // Welford on r^2 = exp(2 (log p - log q)).
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd x = sample_q(rng);
    const double lw = log_p_num(x) - log_q_den(x);
    const double r2 = std::exp(2.0 * lw);
    if (!std::isfinite(lw) || !std::isfinite(r2)) throw NonFiniteWeight("chi2_monte_carlo", i, lw);
    const double delta = r2 - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (r2 - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return {mean - 1.0, std::sqrt(var / static_cast<double>(n))};
}

LinearEllipticalDist::LinearEllipticalDist(VectorXd mean, MatrixXd scale, BaseFamily family, double dof)
    : mean_(std::move(mean)), scale_(std::move(scale)), family_(family), dof_(dof) {
  detail::require_square(scale_, "LinearEllipticalDist");
  detail::require_same_dim(mean_.size(), scale_.rows(), "LinearEllipticalDist");
  if (family_ == BaseFamily::kStudentT && !(dof_ > 0.0)) {
    throw std::invalid_argument("LinearEllipticalDist: Student-t base needs dof > 0");
  }
  Eigen::JacobiSVD<MatrixXd> svd(scale_);
  const auto& s = svd.singularValues();
  if (!(s.minCoeff() > 0.0) || s.maxCoeff() / s.minCoeff() > 1e12) {
    throw NotPositiveDefinite("LinearEllipticalDist: scale matrix singular or condition number exceeds 1e12");
  }
  lu_.compute(scale_);
  inv_scale_t_ = lu_.inverse().transpose();
  log_abs_det_ = s.array().log().sum();
}

double LinearEllipticalDist::base_log_pdf(double e) const {
  return family_ == BaseFamily::kStandardNormal ? normal_log_pdf(e) : student_t_log_pdf(e, dof_);
}

double LinearEllipticalDist::base_score(double e) const {
  if (family_ == BaseFamily::kStandardNormal) return -e;
  return -(dof_ + 1.0) * e / (dof_ + e * e);
}

double LinearEllipticalDist::log_pdf(const VectorXd& x) const {
  detail::require_same_dim(x.size(), dim(), "LinearEllipticalDist::log_pdf");
  const VectorXd e = standardize(x);
  double acc = -log_abs_det_;
  for (Eigen::Index j = 0; j < e.size(); ++j) acc += base_log_pdf(e(j));
  return acc;
}

VectorXd LinearEllipticalDist::grad_log_pdf(const VectorXd& x) const {
  const VectorXd e = standardize(x);
  VectorXd g(e.size());
  for (Eigen::Index j = 0; j < e.size(); ++j) g(j) = base_score(e(j));
  return inv_scale_t_ * g;
}

VectorXd LinearEllipticalDist::sample(Rng& rng) const {
  VectorXd e(dim());
  if (family_ == BaseFamily::kStandardNormal) {
    std::normal_distribution<double> normal;
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = normal(rng);
  } else {
    std::student_t_distribution<double> t(dof_);
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = t(rng);
  }
  return mean_ + scale_ * e;
}

MatrixXd LinearEllipticalDist::covariance() const {
  double v = 1.0;
  if (family_ == BaseFamily::kStudentT) {
    v = dof_ > 2.0 ? dof_ / (dof_ - 2.0) : std::numeric_limits<double>::infinity();
  }
  return v * scale_ * scale_.transpose();
}

std::function<double(const VectorXd&)> log_of_test_function(std::function<double(const VectorXd&)> f) {
  return [f = std::move(f)](const VectorXd& x) {
    const double v = f(x);
    if (v < 0.0) throw NegativeTestFunction(v);
    return std::log(v);
  };
}

void validate_problem(const TargetProblem& problem, const std::vector<VectorXd>& probes) {
  if (!problem.log_p_tilde || !problem.log_f) {
    throw std::invalid_argument("TargetProblem: log_p_tilde and log_f are required");
  }
  for (const auto& x : probes) {
    detail::require_same_dim(x.size(), problem.dim, "TargetProblem probe");
    const double lp = problem.log_p_tilde(x);
    if (!std::isfinite(lp)) throw std::domain_error("TargetProblem: log_p_tilde not finite on a probe point");
    const double lf = problem.log_f(x);
    if (std::isnan(lf) || lf == std::numeric_limits<double>::infinity()) {
      throw std::domain_error("TargetProblem: log f is NaN or +inf on a probe point");
    }
  }
}

}  // namespace coupled_is
