#pragma once

#include "coupled_is/density.hpp"

#include <string>

namespace coupled_is {

/// Linear-Gaussian regression y = X theta + eps, eps ~ N(0, sigma2 I), theta ~ prior.
struct BlrModel {
  MatrixXd x;
  VectorXd y;
  double sigma2 = 1.0;
  GaussianDist prior;
};

GaussianDist blr_posterior(const BlrModel& m);
/// Posterior after one additional observation (x_new, y_new).
GaussianDist blr_update(const GaussianDist& current, const VectorXd& x_new, double y_new, double sigma2);
/// log of the marginal likelihood p(y | X).
double blr_log_evidence(const BlrModel& m);
/// Posterior predictive density N(y_test; x_test^T mu_N, sigma2 + x_test^T Sigma_N x_test).
double blr_predictive_truth(const BlrModel& m, const VectorXd& x_test, double y_test);

struct OptimalMarginals {
  GaussianDist q1s;  // proportional to posterior times f
  GaussianDist q2s;  // the posterior
};
OptimalMarginals blr_optimal_marginals(const BlrModel& m, const VectorXd& x_test, double y_test);

/// p~(theta) = prior(theta) * likelihood, f(theta) = N(y_test; x_test^T theta, sigma2).
/// Carries gradients and the log evidence as log_normalizer.
TargetProblem blr_problem(const BlrModel& m, const VectorXd& x_test, double y_test);

/// Design with iid N(0,1) covariates, theta drawn from the prior, Gaussian noise.
BlrModel make_blr_data(Rng& rng, Eigen::Index n, Eigen::Index dim, double sigma2);

/// Bernoulli-logistic regression with a N(0, I) prior. The first column of x is the intercept.
struct LogRegModel {
  MatrixXd x;
  VectorXd y;
};

/// log sigmoid(t), overflow-safe.
double log_sigmoid(double t);

double logreg_log_unnorm_posterior(const LogRegModel& m, const VectorXd& theta);
VectorXd logreg_grad_log_unnorm_posterior(const LogRegModel& m, const VectorXd& theta);

/// Covariates iid N(0,1) with an intercept column, theta_true ~ N(0, I), labels Bernoulli.
struct LogRegData {
  LogRegModel model;
  VectorXd theta_true;
};
LogRegData make_logreg_data(Rng& rng, Eigen::Index n, Eigen::Index dim);

/// Test covariates from the elliptical Student-t (nu = 3) located at the column
/// means of the covariates and with scale^2 = 10 I; intercept re-appended.
MatrixXd make_corrupted_test(const LogRegModel& m, Rng& rng, Eigen::Index count, double dof = 3.0,
                             double scale2 = 10.0);

/// Labels drawn from Bernoulli(sigmoid(x_test theta)).
VectorXd draw_labels(const MatrixXd& x_test, const VectorXd& theta, Rng& rng);

/// p~ = posterior kernel, f(theta) = prod_k g(y_test_k | x_test_k, theta).
TargetProblem logreg_predictive_problem(const LogRegModel& m, const MatrixXd& x_test, const VectorXd& y_test);

/// CSV with columns x0..x{D-1}, y.
void write_dataset_csv(const std::string& path, const MatrixXd& x, const VectorXd& y);

}  // namespace coupled_is
