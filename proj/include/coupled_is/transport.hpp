#pragma once

#include "coupled_is/density.hpp"

#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace coupled_is {

/// One coordinate of a product-quantile transport.
struct Marginal1D {
  std::function<double(double)> quantile;
  std::function<double(double)> cdf;
  std::function<double(double)> log_pdf;
  std::function<double(double)> score;  // d/dx log pdf, optional
};

enum class TransportKind { kProductQuantile, kGaussianLinear, kEllipticalLinear };
enum class RootKind { kSymmetric, kCholesky };

/// Invertible map T: (0,1)^d -> R^d pushing the uniform cube onto a marginal.
///
/// Internally every map is written in normal scores z = Phi^{-1}(u), which is
/// how couplings hand over their samples; `forward_from_normal` skips the
/// round trip through u and keeps tail precision.
class MarginalTransport {
 public:
  /// x = mean + A Phi^{-1}(u). The symmetric root makes T the gradient of a
  /// convex potential; the Cholesky root matches the marginal but not that property.
  static MarginalTransport gaussian(const GaussianDist& g, RootKind root = RootKind::kSymmetric);
  /// x = mean + A F^{-1}(u) with the base family of `dist`.
  static MarginalTransport elliptical(const LinearEllipticalDist& dist);
  static MarginalTransport product_quantile(std::vector<Marginal1D> coords);

  TransportKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }

  /// Throws std::domain_error if any u_j is outside the open interval (0,1).
  VectorXd forward(const VectorXd& u) const;
  /// Clamped to [1e-15, 1 - 1e-15]. Throws on non-finite x.
  VectorXd inverse(const VectorXd& x) const;

  VectorXd forward_from_normal(const VectorXd& z) const;
  /// Row-wise forward_from_normal.
  MatrixXd forward_from_normal_rows(const MatrixXd& z) const;
  /// Phi^{-1}(inverse(x)) without clamping.
  VectorXd normal_score(const VectorXd& x) const;

  /// For the linear kinds x = mean + A e(z) and this returns de/dz; for the
  /// product kind it returns dx/dz. In both cases dx/dz = linear() * diag(result).
  VectorXd normal_jacobian_diag(const VectorXd& z) const;
  /// A for the linear kinds, identity for product-quantile.
  const MatrixXd& linear() const { return linear_; }
  const VectorXd& location() const { return location_; }

  double log_pdf(const VectorXd& x) const;
  /// Throws std::logic_error for product-quantile coordinates without a score.
  VectorXd grad_log_pdf(const VectorXd& x) const;

  /// Marginal mean and covariance (not available for product-quantile).
  std::optional<GaussianDist> as_gaussian() const { return gaussian_; }
  std::optional<LinearEllipticalDist> as_elliptical() const { return elliptical_; }

 private:
  MarginalTransport() = default;
  double base_from_normal(double z) const;
  double normal_from_base(double e) const;

  TransportKind kind_{};
  Eigen::Index dim_ = 0;
  VectorXd location_;
  MatrixXd linear_;
  std::optional<GaussianDist> gaussian_;
  std::optional<LinearEllipticalDist> elliptical_;
  std::vector<Marginal1D> coords_;
  BaseFamily base_ = BaseFamily::kStandardNormal;
  double dof_ = 0.0;
};

}  // namespace coupled_is
