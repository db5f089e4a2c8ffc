#pragma once

#include "coupled_is/estimators.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coupled_is {

/// Target whose optimal marginals are exactly q1s and q2s: p~ = q2s, f = q1s / q2s.
/// Weights under it are the normalized w_i = q_i* / q_i.
TargetProblem problem_from_optimal(const GaussianDist& q1s, const GaussianDist& q2s);

/// Monte Carlo estimate of E[w1(x1) w2(x2)] under the joint proposal, with the
/// problem's known scale included (it enters squared). `log_value` is the log of `value`.
struct ObjectiveEstimate {
  double value = 0.0;
  double std_err = 0.0;
  double log_value = 0.0;
  /// std_err / value, which is also the standard error of log_value.
  double rel_std_err = 0.0;
};

ObjectiveEstimate objective_estimate(const TargetProblem& problem, const JointProposal& jp, Eigen::Index m, Rng& rng);
/// Same estimate from given normal-score pairs.
ObjectiveEstimate objective_from_normals(const TargetProblem& problem, const MarginalTransport& t1,
                                         const MarginalTransport& t2, const MatrixXd& z1, const MatrixXd& z2);

/// Gradient of log mean(w1 w2) with respect to the flattened coupling parameters
/// (see GaussianCouplingParams::flatten), plus per-coordinate standard errors.
struct GradientEstimate {
  VectorXd grad;
  VectorXd std_err;
  double log_objective = 0.0;
};

/// Reparameterized gradient: z1, w fixed, z2 = U (sigma * V^T z1 + sech(v) * w).
GradientEstimate pathwise_gradient(const TargetProblem& problem, const MarginalTransport& t1,
                                   const MarginalTransport& t2, const GaussianCouplingParams& params, Eigen::Index m,
                                   Rng& rng);
GradientEstimate pathwise_gradient_from_noise(const TargetProblem& problem, const MarginalTransport& t1,
                                              const MarginalTransport& t2, const GaussianCouplingParams& params,
                                              const MatrixXd& z1, const MatrixXd& w);
/// log mean(w1 w2) at fixed noise; the function pathwise_gradient differentiates.
double log_objective_from_noise(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& params, const MatrixXd& z1,
                                const MatrixXd& w);

/// Score-function gradient: sum of self-normalized w1 w2 times grad log c(z1, z2; theta).
GradientEstimate score_gradient(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& params, Eigen::Index m,
                                Rng& rng);
GradientEstimate score_gradient_from_samples(const TargetProblem& problem, const MarginalTransport& t1,
                                             const MarginalTransport& t2, const GaussianCouplingParams& params,
                                             const MatrixXd& z1, const MatrixXd& z2);
/// d/d theta of log c(z1, z2; theta), flattened.
VectorXd grad_log_coupling_density(const GaussianCouplingParams& params, const VectorXd& z1, const VectorXd& z2);
/// log mean(w1 w2 c(theta_new) / c(theta_ref)) on samples drawn under theta_ref.
/// Its gradient in theta_new at theta_ref is the score gradient.
double reweighted_log_objective(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& ref,
                                const GaussianCouplingParams& candidate, const MatrixXd& z1, const MatrixXd& z2);

enum class GradientKind { kPathwise, kScore };

struct AdaptStart {
  std::string label;
  GaussianCouplingParams params;
};

struct AdaptConfig {
  int iterations = 500;
  Eigen::Index batch = 256;
  double lr_start = 0.05;
  double lr_end = 0.005;
  GradientKind gradient = GradientKind::kPathwise;
  /// Adaptive-moment (AMSGrad) steps; plain gradient ascent when false.
  bool amsgrad = true;
  /// Starting singular-value magnitude for the +-I starts (tanh(3) = 0.995).
  double start_v = 3.0;
  /// Empty means the default {I, -I, 0} starts.
  std::vector<AdaptStart> starts;
  std::uint64_t seed = 0;
  /// Draws used to compare the optimized coupling against the baselines.
  Eigen::Index selection_samples = 4096;
  int smoothing_window = 50;

  void validate() const;
};

struct StartTrace {
  std::string label;
  std::vector<double> log_objective;
  std::vector<double> std_err;
  std::vector<double> lr;
  /// Flattened parameters at which each iteration's objective was estimated.
  std::vector<VectorXd> params;
  GaussianCouplingParams final_params;
  /// Mean log objective over the last smoothing_window iterations, known scale excluded.
  double smoothed_final = 0.0;
  bool diverged = false;
};

struct AdaptTrace {
  /// Per-iteration log objective, its standard error and learning rate for the chosen start.
  std::vector<double> log_objective;
  std::vector<double> std_err;
  std::vector<double> lr;
  GaussianCouplingParams final_params;
  double final_objective = 0.0;
  std::string chosen_start;
  /// The coupling to use: the optimized one, or a baseline that beat it.
  Coupling coupling = Coupling::independent(1);
  std::vector<StartTrace> starts;
  /// Log objectives at selection time: optimized, crn, antithetic, independent.
  std::vector<std::pair<std::string, double>> selection;
};

AdaptTrace sga_optimize(const TargetProblem& problem, const MarginalTransport& t1, const MarginalTransport& t2,
                        const AdaptConfig& config);

enum class MarginalFamily { kGaussian, kStudentT };

struct MarginalAdaptConfig {
  MarginalFamily family = MarginalFamily::kGaussian;
  double dof = 5.0;
  Eigen::Index n_adapt = 10000;
  int rounds = 5;
  double inflation = 1.5;
  std::optional<VectorXd> initial_mean;
  /// Start from a Laplace approximation when the problem has gradients.
  bool laplace_start = true;
};

struct AdaptedMarginal {
  MarginalTransport transport;
  /// Moments from the last round, before the final inflation.
  GaussianDist moments;
  double ess = 0.0;
};

struct AdaptedMarginals {
  AdaptedMarginal numerator;
  AdaptedMarginal denominator;
};

/// Iterated self-normalized moment matching of q1* (p~ f) and q2* (p~). Each round
/// draws n_adapt samples and matches moments on all samples so far, weighted against
/// the equal mixture of the proposals used. Throws std::runtime_error if the effective
/// sample size of a round drops below 5.
AdaptedMarginals adapt_marginals(const TargetProblem& problem, const MarginalAdaptConfig& config, Rng& rng);

}  // namespace coupled_is
