#pragma once

#include "coupled_is/estimators.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace coupled_is {

/// Relative (mu^-2 scaled) asymptotic variance chi2_num + chi2_den - 2 (C - 1).
/// Divergent configurations come back with finite = false, infinite
/// relative_asym_var and the failed condition in `note`.
struct VarianceReport {
  double chi2_num = 0.0;
  double chi2_den = 0.0;
  double c_term = 1.0;
  double relative_asym_var = 0.0;
  bool finite = true;
  std::string note;
};

struct DeltaMethodReport {
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
};

/// Estimate with standard error.
struct ValueWithError {
  double value = 0.0;
  double std_err = 0.0;
};

/// C = E[w1(x1) w2(x2)] with w_i = q_i* / q_i and (x1, x2) sampled through
/// transports built with `root` and the Gaussian coupling S_c. Throws
/// NotPositiveDefinite naming the ratio whose precision condition failed.
double c_term_closed_form(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                          const GaussianDist& q2s, const MatrixXd& s_c, RootKind root = RootKind::kSymmetric);

VarianceReport variance_report_closed_form(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                                           const GaussianDist& q2s, const MatrixXd& s_c,
                                           RootKind root = RootKind::kSymmetric);

/// n * sample variance of gensnis_estimate over `replications` runs with seeds
/// stream_seed(seed, r). `value` is n Var (absolute), std_err from the fourth moment.
struct EmpiricalVariance {
  double n_var = 0.0;
  double std_err = 0.0;
  double mean_estimate = 0.0;
  std::vector<double> estimates;
};

EmpiricalVariance variance_report_empirical(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n,
                                            std::size_t replications, std::uint64_t seed);

/// Same for any estimator run of the form run(rng) -> estimate.
EmpiricalVariance replicate_variance(const std::function<double(Rng&)>& run, Eigen::Index n,
                                     std::size_t replications, std::uint64_t seed);

/// Relative asymptotic variance Var(w1/mean(w1) - w2/mean(w2)) from one run's
/// log-weights, the per-pair linearization of the ratio estimator.
ValueWithError linearized_relative_variance(const VectorXd& log_w1, const VectorXd& log_w2);

/// (sqrt(chi2_den) - sqrt(chi2_num))^2.
double lower_bound(double chi2_num, double chi2_den);

/// Monte Carlo estimate of (E_p |f - mu|)^2 from n draws of the normalized target.
ValueWithError snis_variance_floor(const std::function<double(const VectorXd&)>& f,
                                   const std::function<VectorXd(Rng&)>& sample_p, double mu, std::size_t n, Rng& rng);

DeltaMethodReport delta_method_mse(double i, double z, double var_i, double var_z, double cov_iz);

struct LandscapeRow {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  /// Seed of the (U, V) draw; 0 for U = V = I.
  std::uint64_t uv_seed = 0;
  VarianceReport report;
};

/// Closed-form reports over sigma_grid^2 (d = 2). For uv_draws = 0 uses U = V = I,
/// otherwise draws Haar U, V with seed stream_seed(seed, k) for k < uv_draws.
std::vector<LandscapeRow> variance_landscape(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                                             const GaussianDist& q2s, const std::vector<double>& sigma_grid,
                                             std::size_t uv_draws, std::uint64_t seed);

}  // namespace coupled_is
