#include "coupled_is/transport.hpp"

#include "coupled_is/special.hpp"

#include <cmath>
#include <stdexcept>

namespace coupled_is {

namespace {

constexpr double kClamp = 1e-15;

double clamp_unit(double u) { return std::min(std::max(u, kClamp), 1.0 - kClamp); }

}  // namespace

MarginalTransport MarginalTransport::gaussian(const GaussianDist& g, RootKind root) {
  MarginalTransport t;
  t.kind_ = TransportKind::kGaussianLinear;
  t.dim_ = g.dim();
  t.location_ = g.mean();
  t.linear_ = root == RootKind::kSymmetric ? g.sym_sqrt() : g.chol();
  t.gaussian_ = g;
  t.elliptical_ = LinearEllipticalDist(g.mean(), t.linear_, BaseFamily::kStandardNormal);
  return t;
}

MarginalTransport MarginalTransport::elliptical(const LinearEllipticalDist& dist) {
  MarginalTransport t;
  t.kind_ = TransportKind::kEllipticalLinear;
  t.dim_ = dist.dim();
  t.location_ = dist.mean();
  t.linear_ = dist.scale();
  t.elliptical_ = dist;
  t.base_ = dist.family();
  t.dof_ = dist.dof();
  if (dist.family() == BaseFamily::kStandardNormal) {
    t.gaussian_ = GaussianDist(dist.mean(), dist.covariance());
  }
  return t;
}

MarginalTransport MarginalTransport::product_quantile(std::vector<Marginal1D> coords) {
  if (coords.empty()) throw std::invalid_argument("product_quantile: no coordinates");
  for (const auto& c : coords) {
    if (!c.quantile || !c.cdf || !c.log_pdf) {
      throw std::invalid_argument("product_quantile: quantile, cdf and log_pdf are required");
    }
  }
  MarginalTransport t;
  t.kind_ = TransportKind::kProductQuantile;
  t.dim_ = static_cast<Eigen::Index>(coords.size());
  t.location_ = VectorXd::Zero(t.dim_);
  t.linear_ = MatrixXd::Identity(t.dim_, t.dim_);
  t.coords_ = std::move(coords);
  return t;
}

double MarginalTransport::base_from_normal(double z) const {
  return base_ == BaseFamily::kStandardNormal ? z : student_t_quantile_of_normal_score(z, dof_);
}

double MarginalTransport::normal_from_base(double e) const {
  return base_ == BaseFamily::kStandardNormal ? e : normal_score_of_student_t(e, dof_);
}

VectorXd MarginalTransport::forward(const VectorXd& u) const {
  detail::require_same_dim(u.size(), dim_, "MarginalTransport::forward");
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    if (!(u(j) > 0.0 && u(j) < 1.0)) {
      throw std::domain_error("MarginalTransport::forward: u outside (0,1), quantile is infinite");
    }
  }
  VectorXd out(dim_);
  if (kind_ == TransportKind::kProductQuantile) {
    for (Eigen::Index j = 0; j < dim_; ++j) out(j) = coords_[j].quantile(u(j));
    return out;
  }
  VectorXd e(dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) {
    e(j) = base_ == BaseFamily::kStandardNormal ? normal_quantile(u(j)) : student_t_quantile(u(j), dof_);
  }
  return location_ + linear_ * e;
}

VectorXd MarginalTransport::inverse(const VectorXd& x) const {
  detail::require_same_dim(x.size(), dim_, "MarginalTransport::inverse");
  if (!x.allFinite()) throw std::domain_error("MarginalTransport::inverse: non-finite x");
  VectorXd u(dim_);
  if (kind_ == TransportKind::kProductQuantile) {
    for (Eigen::Index j = 0; j < dim_; ++j) u(j) = clamp_unit(coords_[j].cdf(x(j)));
    return u;
  }
  const VectorXd e = elliptical_->standardize(x);
  for (Eigen::Index j = 0; j < dim_; ++j) {
    u(j) = clamp_unit(base_ == BaseFamily::kStandardNormal ? normal_cdf(e(j)) : student_t_cdf(e(j), dof_));
  }
  return u;
}

VectorXd MarginalTransport::forward_from_normal(const VectorXd& z) const {
  detail::require_same_dim(z.size(), dim_, "MarginalTransport::forward_from_normal");
  VectorXd out(dim_);
  if (kind_ == TransportKind::kProductQuantile) {
    for (Eigen::Index j = 0; j < dim_; ++j) out(j) = coords_[j].quantile(clamp_unit(normal_cdf(z(j))));
    return out;
  }
  if (base_ == BaseFamily::kStandardNormal) return location_ + linear_ * z;
  VectorXd e(dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) e(j) = base_from_normal(z(j));
  return location_ + linear_ * e;
}

MatrixXd MarginalTransport::forward_from_normal_rows(const MatrixXd& z) const {
  if (z.cols() != dim_) throw DimensionMismatch("forward_from_normal_rows: column count");
  if (kind_ != TransportKind::kProductQuantile && base_ == BaseFamily::kStandardNormal) {
    return (z * linear_.transpose()).rowwise() + location_.transpose();
  }
  MatrixXd out(z.rows(), dim_);
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = forward_from_normal(z.row(i).transpose()).transpose();
  return out;
}

VectorXd MarginalTransport::normal_score(const VectorXd& x) const {
  detail::require_same_dim(x.size(), dim_, "MarginalTransport::normal_score");
  VectorXd z(dim_);
  if (kind_ == TransportKind::kProductQuantile) {
    for (Eigen::Index j = 0; j < dim_; ++j) z(j) = normal_quantile(clamp_unit(coords_[j].cdf(x(j))));
    return z;
  }
  const VectorXd e = elliptical_->standardize(x);
  for (Eigen::Index j = 0; j < dim_; ++j) z(j) = normal_from_base(e(j));
  return z;
}

VectorXd MarginalTransport::normal_jacobian_diag(const VectorXd& z) const {
  VectorXd d(dim_);
  if (kind_ == TransportKind::kProductQuantile) {
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const double x = coords_[j].quantile(clamp_unit(normal_cdf(z(j))));
      d(j) = std::exp(normal_log_pdf(z(j)) - coords_[j].log_pdf(x));
    }
    return d;
  }
  if (base_ == BaseFamily::kStandardNormal) return VectorXd::Ones(dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) {
    const double e = base_from_normal(z(j));
    d(j) = std::exp(normal_log_pdf(z(j)) - student_t_log_pdf(e, dof_));
  }
  return d;
}

double MarginalTransport::log_pdf(const VectorXd& x) const {
  if (kind_ == TransportKind::kProductQuantile) {
    detail::require_same_dim(x.size(), dim_, "MarginalTransport::log_pdf");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < dim_; ++j) acc += coords_[j].log_pdf(x(j));
    return acc;
  }
  return elliptical_->log_pdf(x);
}

VectorXd MarginalTransport::grad_log_pdf(const VectorXd& x) const {
  if (kind_ == TransportKind::kProductQuantile) {
    VectorXd g(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) {
      if (!coords_[j].score) throw std::logic_error("product_quantile coordinate has no score function");
      g(j) = coords_[j].score(x(j));
    }
    return g;
  }
  return elliptical_->grad_log_pdf(x);
}

}  // namespace coupled_is
