#pragma once

#include "coupled_is/adaptation.hpp"
#include "coupled_is/models.hpp"
#include "coupled_is/variance.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace coupled_is {

/// Reference value with its standard error; exact values carry std_err = 0.
struct ReferenceTruth {
  double value = 0.0;
  double std_err = 0.0;
  bool exact = false;
  /// Set when std_err exceeds 1% of value.
  bool warning = false;
  Eigen::Index samples = 0;
};

// ---------------------------------------------------------------------------
// Singular-value sweep of the closed-form variance.

struct LandscapeConfig {
  /// "figure" uses the fixed 2D configuration; "blr" builds marginals from simulated data.
  std::string preset = "figure";
  Eigen::Index n_data = 20;
  double sigma2 = 1.0;
  /// Proposal covariance = factor * optimal covariance (blr preset).
  double proposal_scale = 4.0;
  std::vector<double> grid;
  std::size_t uv_draws = 50;
  std::uint64_t seed = 0;
};

struct LandscapeInputs {
  GaussianDist q1s, q2s, q1, q2;
};

LandscapeInputs landscape_inputs(const LandscapeConfig& config);
std::vector<LandscapeRow> run_landscape(const LandscapeConfig& config);

// ---------------------------------------------------------------------------
// Consistency of the estimators on the regression problem.

struct ConsistencyConfig {
  Eigen::Index dim = 2;
  Eigen::Index n_data = 20;
  double sigma2 = 1.0;
  double proposal_scale = 2.0;
  double proposal_shift = 0.1;
  std::vector<Eigen::Index> sample_sizes{1000, 10000, 100000};
  std::size_t replications = 20;
  std::uint64_t seed = 0;
};

struct ConsistencyRow {
  std::string estimator;
  Eigen::Index n = 0;
  std::size_t replication = 0;
  double estimate = 0.0;
  double std_err = 0.0;
  double truth = 0.0;
};

std::vector<ConsistencyRow> run_consistency(const ConsistencyConfig& config);

// ---------------------------------------------------------------------------
// Logistic regression with corrupted test points.

struct LogregConfig {
  Eigen::Index dim = 10;
  Eigen::Index n_data = 10;
  Eigen::Index n_test = 10;
  double test_dof = 3.0;
  double test_scale2 = 10.0;
  /// Total adaptation samples for the evaluated marginals, split evenly across adapt_rounds.
  Eigen::Index m_adapt = 1500;
  int adapt_rounds = 5;
  MarginalFamily family = MarginalFamily::kGaussian;
  double family_dof = 5.0;
  Eigen::Index m_eval = 200;
  std::size_t replications = 50;
  AdaptConfig coupling;
  /// Budget of the reference run: total adaptation samples and evaluation samples.
  Eigen::Index reference_adapt = 500000;
  Eigen::Index reference_samples = 800000;
  std::uint64_t seed = 0;
};

struct LogregRow {
  std::string method;
  std::size_t replication = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double log_ratio = 0.0;
};

struct LogregResult {
  std::vector<LogregRow> rows;
  ReferenceTruth truth;
  AdaptTrace trace;
};

/// The logistic predictive problem built from config.seed: data, corrupted test points and labels.
struct LogregSetup {
  LogRegData data;
  MatrixXd x_test;
  VectorXd y_test;
  TargetProblem problem;
};
LogregSetup logreg_setup(const LogregConfig& config);

/// High-budget GenSNIS reference for the logistic problem (optimized coupling on
/// marginals adapted with reference_adapt samples in total).
ReferenceTruth logreg_reference_truth(const LogregSetup& setup, const LogregConfig& config);
ReferenceTruth blr_reference_truth(const BlrModel& m, const VectorXd& x_test, double y_test);

/// Methods: optimized, independent, snis_q1, snis_q2. One adaptation, `replications` evaluations.
LogregResult run_logreg(const LogregConfig& config);

// ---------------------------------------------------------------------------
// Coupling optimization traces on the regression problem.

struct TraceConfig {
  Eigen::Index dim = 2;
  Eigen::Index n_data = 20;
  double sigma2 = 1.0;
  double proposal_scale = 2.0;
  double proposal_shift = 0.3;
  AdaptConfig adapt;
};

AdaptTrace run_trace(const TraceConfig& config);

}  // namespace coupled_is
