#pragma once

#include "coupled_is/errors.hpp"
#include "coupled_is/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace coupled_is {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionMismatch(std::string(what) + ": matrix is not square");
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) + " vs " +
                            std::to_string(b));
  }
}

}  // namespace detail

/// Multivariate normal with cached Cholesky factor and symmetric square root.
///
/// Construction symmetrizes `cov` after checking it is symmetric to 1e-12
/// (relative), and rejects covariances that are not positive definite or whose
/// condition number exceeds 1e12.
template <typename Scalar>
class Gaussian {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  static constexpr Scalar kMaxCondition = Scalar(1e12);

  Gaussian(Vector mean, const Matrix& cov) : mean_(std::move(mean)) {
    detail::require_square(cov, "Gaussian");
    detail::require_same_dim(mean_.size(), cov.rows(), "Gaussian mean/cov");
    const Scalar scale = std::max(cov.cwiseAbs().maxCoeff(), Scalar(1e-300));
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
      throw NotPositiveDefinite("Gaussian: covariance is not symmetric");
    }
    cov_ = Scalar(0.5) * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_);
    const Vector& lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > Scalar(0))) {
      throw NotPositiveDefinite("Gaussian: covariance is not positive definite");
    }
    if (lambda.maxCoeff() / lambda.minCoeff() > kMaxCondition) {
      throw NotPositiveDefinite("Gaussian: covariance condition number exceeds 1e12");
    }
    sym_sqrt_ = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    Eigen::LLT<Matrix> llt(cov_);
    chol_ = llt.matrixL();
    log_det_ = Scalar(2) * chol_.diagonal().array().log().sum();
    precision_ = llt.solve(Matrix::Identity(dim(), dim()));
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  /// Lower-triangular L with L L^T = cov.
  const Matrix& chol() const { return chol_; }
  /// Symmetric positive definite A with A A = cov.
  const Matrix& sym_sqrt() const { return sym_sqrt_; }
  const Matrix& precision() const { return precision_; }
  Scalar log_det() const { return log_det_; }

  Scalar log_pdf(const Vector& x) const {
    detail::require_same_dim(x.size(), dim(), "Gaussian::log_pdf");
    const Vector r = chol_.template triangularView<Eigen::Lower>().solve(x - mean_);
    return Scalar(-0.5) * (r.squaredNorm() + log_det_ +
                           Scalar(dim()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
  }

  Vector grad_log_pdf(const Vector& x) const { return -(precision_ * (x - mean_)); }

  Vector sample(Rng& rng) const {
    const Eigen::MatrixXd z = standard_normal_rows(rng, 1, dim());
    return mean_ + sym_sqrt_ * z.row(0).transpose().template cast<Scalar>();
  }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  Matrix sym_sqrt_;
  Matrix precision_;
  Scalar log_det_{};
};

using GaussianDist = Gaussian<double>;

/// log N(x; m, S) without constructing a Gaussian (no conditioning checks).
template <typename Scalar>
Scalar gaussian_log_pdf(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& m,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& s) {
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(s);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("gaussian_log_pdf: covariance not PD");
  const auto l = llt.matrixL();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r = l.solve(x - m);
  Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  return Scalar(-0.5) *
         (r.squaredNorm() + log_det + Scalar(x.size()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
}

/// N(x; m1, S1) N(x; m2, S2) = scale * N(x; mean, cov).
template <typename Scalar>
struct GaussianProduct {
  Scalar scale;
  Scalar log_scale;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov;
};

template <typename Scalar>
GaussianProduct<Scalar> gaussian_product(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& m1,
                                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& s1,
                                         const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& m2,
                                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& s2) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(s1, "gaussian_product");
  detail::require_square(s2, "gaussian_product");
  detail::require_same_dim(m1.size(), s1.rows(), "gaussian_product");
  detail::require_same_dim(m2.size(), s2.rows(), "gaussian_product");
  detail::require_same_dim(m1.size(), m2.size(), "gaussian_product");
  Eigen::LLT<Matrix> l1(s1), l2(s2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success) {
    throw NotPositiveDefinite("gaussian_product: input covariance not positive definite");
  }
  const Matrix p1 = l1.solve(Matrix::Identity(s1.rows(), s1.cols()));
  const Matrix p2 = l2.solve(Matrix::Identity(s2.rows(), s2.cols()));
  Eigen::LLT<Matrix> lsum(p1 + p2);
  Matrix cov = lsum.solve(Matrix::Identity(s1.rows(), s1.cols()));
  cov = Scalar(0.5) * (cov + cov.transpose()).eval();
  GaussianProduct<Scalar> out;
  out.mean = cov * (p1 * m1 + p2 * m2);
  out.cov = cov;
  out.log_scale = gaussian_log_pdf<Scalar>(m1, m2, s1 + s2);
  out.scale = std::exp(out.log_scale);
  return out;
}

/// N(x; m1, S1) / N(x; m2, S2) = scale * N(x; mean, cov).
///
/// Requires S1^-1 - S2^-1 positive definite. The scale is obtained by
/// evaluating both sides at the mode `mean`, which makes the identity exact
/// by construction instead of relying on a closed-form determinant expression.
template <typename Scalar>
struct GaussianRatio {
  Scalar scale;
  Scalar log_scale;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov;
};

template <typename Scalar>
GaussianRatio<Scalar> gaussian_ratio(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& m1,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& s1,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& m2,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& s2) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(s1, "gaussian_ratio");
  detail::require_square(s2, "gaussian_ratio");
  detail::require_same_dim(m1.size(), s1.rows(), "gaussian_ratio");
  detail::require_same_dim(m2.size(), s2.rows(), "gaussian_ratio");
  detail::require_same_dim(m1.size(), m2.size(), "gaussian_ratio");
  Eigen::LLT<Matrix> l1(s1), l2(s2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success) {
    throw NotPositiveDefinite("gaussian_ratio: input covariance not positive definite");
  }
  const Eigen::Index d = s1.rows();
  const Matrix p1 = l1.solve(Matrix::Identity(d, d));
  const Matrix p2 = l2.solve(Matrix::Identity(d, d));
  Matrix prec = p1 - p2;
  prec = Scalar(0.5) * (prec + prec.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(prec, Eigen::EigenvaluesOnly);
  const Scalar tol = Scalar(1e-12) * std::max(p1.cwiseAbs().maxCoeff(), p2.cwiseAbs().maxCoeff());
  if (!(eig.eigenvalues().minCoeff() > tol)) {
    throw NotPositiveDefinite(
        "gaussian_ratio: precision-order violation, S1^-1 - S2^-1 is not positive definite");
  }
  Eigen::LLT<Matrix> lp(prec);
  GaussianRatio<Scalar> out;
  out.cov = lp.solve(Matrix::Identity(d, d));
  out.cov = Scalar(0.5) * (out.cov + out.cov.transpose()).eval();
  out.mean = out.cov * (p1 * m1 - p2 * m2);
  out.log_scale = gaussian_log_pdf<Scalar>(out.mean, m1, s1) - gaussian_log_pdf<Scalar>(out.mean, m2, s2) -
                  gaussian_log_pdf<Scalar>(out.mean, out.mean, out.cov);
  out.scale = std::exp(out.log_scale);
  return out;
}

/// chi^2(N(mA, SA) || N(mB, SB)) in closed form. Finite only when 2 SB - SA is
/// positive definite; otherwise throws NotPositiveDefinite.
template <typename Scalar>
Scalar chi2_gaussians(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& ma,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& sa,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mb,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& sb) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_same_dim(ma.size(), mb.size(), "chi2_gaussians");
  detail::require_same_dim(sa.rows(), sb.rows(), "chi2_gaussians");
  detail::require_same_dim(ma.size(), sa.rows(), "chi2_gaussians");
  const Matrix two_b_minus_a = Scalar(2) * sb - sa;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Scalar(0.5) * (two_b_minus_a + two_b_minus_a.transpose()),
                                            Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > Scalar(1e-14) * std::max(Scalar(1), sb.cwiseAbs().maxCoeff()))) {
    throw NotPositiveDefinite("chi-squared divergence infinite: 2*SB - SA is not positive definite");
  }
  Eigen::LLT<Matrix> lc(two_b_minus_a), la(sa), lb(sb);
  if (la.info() != Eigen::Success || lb.info() != Eigen::Success) {
    throw NotPositiveDefinite("chi2_gaussians: input covariance not positive definite");
  }
  auto log_det = [](const Eigen::LLT<Matrix>& l) {
    return Scalar(2) * l.matrixLLT().diagonal().array().log().sum();
  };
  const auto delta = (ma - mb).eval();
  const Scalar quad = delta.dot(lc.solve(delta));
  const Scalar log_value = log_det(lb) - Scalar(0.5) * (log_det(lc) + log_det(la)) + quad;
  return std::max(Scalar(0), std::expm1(log_value));
}

template <typename Scalar>
Scalar chi2_gaussians(const Gaussian<Scalar>& a, const Gaussian<Scalar>& b) {
  return chi2_gaussians<Scalar>(a.mean(), a.cov(), b.mean(), b.cov());
}

/// Monte Carlo estimate with standard error.
struct McEstimate {
  double estimate;
  double std_err;
};

/// Unbiased estimate of chi^2(p || q) = E_q[(p/q)^2] - 1 from N draws of q.
/// When p^2/q is not integrable the standard error does not settle as N grows.
McEstimate chi2_monte_carlo(const std::function<double(const VectorXd&)>& log_p_num,
                            const std::function<double(const VectorXd&)>& log_q_den,
                            const std::function<VectorXd(Rng&)>& sample_q, std::size_t n, Rng& rng);

enum class BaseFamily { kStandardNormal, kStudentT };

/// x = mean + A * e with iid standard (normal or Student-t) coordinates e.
///
/// With a Student-t base this is not the canonical multivariate t: coordinates
/// of e are independent. It has an exact density and heavy tails.
class LinearEllipticalDist {
 public:
  LinearEllipticalDist(VectorXd mean, MatrixXd scale, BaseFamily family, double dof = 0.0);

  static LinearEllipticalDist normal(const GaussianDist& g) {
    return {g.mean(), g.sym_sqrt(), BaseFamily::kStandardNormal};
  }

  Eigen::Index dim() const { return mean_.size(); }
  const VectorXd& mean() const { return mean_; }
  const MatrixXd& scale() const { return scale_; }
  BaseFamily family() const { return family_; }
  double dof() const { return dof_; }

  /// A^{-1} (x - mean).
  VectorXd standardize(const VectorXd& x) const { return lu_.solve(x - mean_); }
  double base_log_pdf(double e) const;
  /// d/de log g(e).
  double base_score(double e) const;

  double log_pdf(const VectorXd& x) const;
  VectorXd grad_log_pdf(const VectorXd& x) const;
  VectorXd sample(Rng& rng) const;
  /// Covariance of x (infinite for Student-t with dof <= 2).
  MatrixXd covariance() const;

 private:
  VectorXd mean_;
  MatrixXd scale_;
  BaseFamily family_;
  double dof_;
  Eigen::PartialPivLU<MatrixXd> lu_;
  MatrixXd inv_scale_t_;
  double log_abs_det_{};
};

/// Unnormalized target p~ = exp(log_scale) * exp(log_p_tilde) and test function f >= 0.
///
/// `log_scale` is a known multiplicative constant tracked apart from the
/// kernel; estimators never let it enter a ratio, so rescaling p~ leaves every
/// self-normalized quantity bitwise unchanged.
struct TargetProblem {
  int dim = 0;
  std::function<double(const VectorXd&)> log_p_tilde;
  /// log f(x); -inf where f(x) = 0.
  std::function<double(const VectorXd&)> log_f;
  std::function<VectorXd(const VectorXd&)> grad_log_p_tilde;  // optional
  std::function<VectorXd(const VectorXd&)> grad_log_f;        // optional
  double log_scale = 0.0;
  /// log of the integral of exp(log_p_tilde); only UIS needs it.
  std::optional<double> log_normalizer;

  TargetProblem scaled(double factor) const {
    TargetProblem out = *this;
    out.log_scale += std::log(factor);
    return out;
  }
  bool differentiable() const { return static_cast<bool>(grad_log_p_tilde) && static_cast<bool>(grad_log_f); }
};

/// Wraps a plain test function as log f, throwing NegativeTestFunction on f(x) < 0.
std::function<double(const VectorXd&)> log_of_test_function(std::function<double(const VectorXd&)> f);

/// Checks log p~ finite and f >= 0 at every probe. Throws on the first violation.
void validate_problem(const TargetProblem& problem, const std::vector<VectorXd>& probes);

}  // namespace coupled_is
