#include "coupled_is/models.hpp"

#include "coupled_is/special.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <stdexcept>

namespace coupled_is {

namespace {

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

GaussianDist blr_posterior(const BlrModel& m) {
  detail::require_same_dim(m.x.rows(), m.y.size(), "BlrModel X/y");
  const Eigen::Index d = m.prior.dim();
  if (m.x.rows() == 0) return m.prior;
  detail::require_same_dim(m.x.cols(), d, "BlrModel X/prior");
  const MatrixXd prec = m.prior.precision() + m.x.transpose() * m.x / m.sigma2;
  Eigen::LLT<MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("blr_posterior: posterior precision singular");
  const MatrixXd cov = symmetrize(llt.solve(MatrixXd::Identity(d, d)));
  const VectorXd mean = cov * (m.prior.precision() * m.prior.mean() + m.x.transpose() * m.y / m.sigma2);
  return {mean, cov};
}

GaussianDist blr_update(const GaussianDist& current, const VectorXd& x_new, double y_new, double sigma2) {
  const double s = sigma2 + x_new.dot(current.cov() * x_new);
  const VectorXd k = current.cov() * x_new / s;
  const VectorXd mean = current.mean() + k * (y_new - x_new.dot(current.mean()));
  const MatrixXd cov = symmetrize(current.cov() - k * (current.cov() * x_new).transpose());
  return {mean, cov};
}

double blr_log_evidence(const BlrModel& m) {
  const Eigen::Index n = m.x.rows();
  if (n == 0) return 0.0;
  const MatrixXd cov = m.sigma2 * MatrixXd::Identity(n, n) + m.x * m.prior.cov() * m.x.transpose();
  return gaussian_log_pdf<double>(m.y, m.x * m.prior.mean(), symmetrize(cov));
}

double blr_predictive_truth(const BlrModel& m, const VectorXd& x_test, double y_test) {
  const GaussianDist post = blr_posterior(m);
  const double mean = x_test.dot(post.mean());
  const double var = m.sigma2 + x_test.dot(post.cov() * x_test);
  return std::exp(-0.5 * (y_test - mean) * (y_test - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

OptimalMarginals blr_optimal_marginals(const BlrModel& m, const VectorXd& x_test, double y_test) {
  BlrModel augmented = m;
  augmented.x.conservativeResize(m.x.rows() + 1, m.prior.dim());
  augmented.x.row(m.x.rows()) = x_test.transpose();
  augmented.y.conservativeResize(m.y.size() + 1);
  augmented.y(m.y.size()) = y_test;
  return {blr_posterior(augmented), blr_posterior(m)};
}

TargetProblem blr_problem(const BlrModel& m, const VectorXd& x_test, double y_test) {
  const MatrixXd xtx = m.x.transpose() * m.x;
  const VectorXd xty = m.x.transpose() * m.y;
  const double yty = m.y.squaredNorm();
  const double n = static_cast<double>(m.x.rows());
  const double s2 = m.sigma2;
  const GaussianDist prior = m.prior;
  const double log_norm_lik = -0.5 * n * std::log(2.0 * std::numbers::pi * s2);
  TargetProblem p;
  p.dim = static_cast<int>(prior.dim());
  p.log_p_tilde = [=](const VectorXd& th) {
    return prior.log_pdf(th) + log_norm_lik - 0.5 * (th.dot(xtx * th) - 2.0 * th.dot(xty) + yty) / s2;
  };
  p.grad_log_p_tilde = [=](const VectorXd& th) -> VectorXd {
    return prior.grad_log_pdf(th) - (xtx * th - xty) / s2;
  };
  const double log_norm_f = -0.5 * std::log(2.0 * std::numbers::pi * s2);
  p.log_f = [=](const VectorXd& th) {
    const double r = y_test - x_test.dot(th);
    return log_norm_f - 0.5 * r * r / s2;
  };
  p.grad_log_f = [=](const VectorXd& th) -> VectorXd { return x_test * ((y_test - x_test.dot(th)) / s2); };
  p.log_normalizer = blr_log_evidence(m);
  return p;
}

BlrModel make_blr_data(Rng& rng, Eigen::Index n, Eigen::Index dim, double sigma2) {
  GaussianDist prior(VectorXd::Zero(dim), MatrixXd::Identity(dim, dim));
  const MatrixXd x = standard_normal_rows(rng, n, dim);
  const VectorXd theta = prior.sample(rng);
  const VectorXd noise = std::sqrt(sigma2) * standard_normal_rows(rng, n, 1).col(0);
  return {x, x * theta + noise, sigma2, prior};
}

double log_sigmoid(double t) { return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

double logreg_log_unnorm_posterior(const LogRegModel& m, const VectorXd& theta) {
  detail::require_same_dim(theta.size(), m.x.cols(), "logreg theta");
  const VectorXd eta = m.x * theta;
  double acc = -0.5 * theta.squaredNorm() - 0.5 * static_cast<double>(theta.size()) * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    acc += m.y(i) > 0.5 ? log_sigmoid(eta(i)) : log_sigmoid(-eta(i));
  }
  return acc;
}

VectorXd logreg_grad_log_unnorm_posterior(const LogRegModel& m, const VectorXd& theta) {
  const VectorXd eta = m.x * theta;
  VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = m.y(i) - std::exp(log_sigmoid(eta(i)));
  return m.x.transpose() * resid - theta;
}

LogRegData make_logreg_data(Rng& rng, Eigen::Index n, Eigen::Index dim) {
  LogRegData out;
  out.model.x.resize(n, dim + 1);
  out.model.x.col(0).setOnes();
  out.model.x.rightCols(dim) = standard_normal_rows(rng, n, dim);
  out.theta_true = standard_normal_rows(rng, 1, dim + 1).row(0).transpose();
  out.model.y = draw_labels(out.model.x, out.theta_true, rng);
  return out;
}

MatrixXd make_corrupted_test(const LogRegModel& m, Rng& rng, Eigen::Index count, double dof, double scale2) {
  if (count < 1) throw std::invalid_argument("make_corrupted_test: count must be >= 1");
  const Eigen::Index dim = m.x.cols() - 1;
  const VectorXd location = m.x.rightCols(dim).colwise().mean().transpose();
  const LinearEllipticalDist t(location, std::sqrt(scale2) * MatrixXd::Identity(dim, dim), BaseFamily::kStudentT, dof);
  MatrixXd out(count, dim + 1);
  out.col(0).setOnes();
  for (Eigen::Index i = 0; i < count; ++i) out.row(i).tail(dim) = t.sample(rng).transpose();
  return out;
}

VectorXd draw_labels(const MatrixXd& x_test, const VectorXd& theta, Rng& rng) {
  std::uniform_real_distribution<double> unif;
  VectorXd y(x_test.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y(i) = unif(rng) < std::exp(log_sigmoid(x_test.row(i).dot(theta))) ? 1.0 : 0.0;
  }
  return y;
}

TargetProblem logreg_predictive_problem(const LogRegModel& m, const MatrixXd& x_test, const VectorXd& y_test) {
  detail::require_same_dim(x_test.cols(), m.x.cols(), "logreg test covariates");
  detail::require_same_dim(x_test.rows(), y_test.size(), "logreg test labels");
  TargetProblem p;
  p.dim = static_cast<int>(m.x.cols());
  p.log_p_tilde = [m](const VectorXd& th) { return logreg_log_unnorm_posterior(m, th); };
  p.grad_log_p_tilde = [m](const VectorXd& th) { return logreg_grad_log_unnorm_posterior(m, th); };
  const LogRegModel test{x_test, y_test};
  p.log_f = [test](const VectorXd& th) {
    const VectorXd eta = test.x * th;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) acc += test.y(i) > 0.5 ? log_sigmoid(eta(i)) : log_sigmoid(-eta(i));
    return acc;
  };
  p.grad_log_f = [test](const VectorXd& th) -> VectorXd {
    const VectorXd eta = test.x * th;
    VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = test.y(i) - std::exp(log_sigmoid(eta(i)));
    return test.x.transpose() * resid;
  };
  return p;
}

void write_dataset_csv(const std::string& path, const MatrixXd& x, const VectorXd& y) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << 'x' << j << ',';
  out << "y\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << x(i, j) << ',';
    out << y(i) << '\n';
  }
}

}  // namespace coupled_is
