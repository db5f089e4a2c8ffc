#pragma once

#include "coupled_is/coupling.hpp"
#include "coupled_is/density.hpp"
#include "coupled_is/transport.hpp"

#include <string>

namespace coupled_is {

/// Two marginal transports joined by a coupling.
struct JointProposal {
  MarginalTransport t1;
  MarginalTransport t2;
  Coupling coupling;

  JointProposal(MarginalTransport q1, MarginalTransport q2, Coupling c);
  Eigen::Index dim() const { return t1.dim(); }
};

struct EstimateResult {
  double estimate = 0.0;
  /// Î and Ẑ, including the problem's known log_scale.
  double numerator = 0.0;
  double denominator = 0.0;
  double log_numerator = 0.0;
  double log_denominator = 0.0;
  /// Delta-method standard error of the ratio (or plain standard error for UIS).
  double std_err = 0.0;
  Eigen::Index n = 0;
  /// Kernel log-weights log(f p~ / q1) and log(p~ / q2); the log_scale is not included.
  VectorXd log_w1;
  VectorXd log_w2;
};

/// Log-weights for given sample rows. `with_f` adds log f. Throws NonFiniteWeight
/// on NaN or +inf, naming `stream` and the row.
VectorXd log_weights(const TargetProblem& problem, const MarginalTransport& q, const MatrixXd& x, bool with_f,
                     const std::string& stream);

/// Plain importance sampling for normalized p (needs problem.log_normalizer).
EstimateResult uis_estimate(const TargetProblem& problem, const MarginalTransport& q, Eigen::Index n, Rng& rng);

/// Self-normalized importance sampling. Draws z ~ N(0, I) row by row and maps it through q.
EstimateResult snis_estimate(const TargetProblem& problem, const MarginalTransport& q, Eigen::Index n, Rng& rng);

/// Î/Ẑ with x1 feeding the numerator and x2 the denominator, (x1, x2) drawn jointly.
EstimateResult gensnis_estimate(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n, Rng& rng);

/// Both streams enter both sums. No variance decomposition is offered for this variant.
EstimateResult gensnis_recycled(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n, Rng& rng);

/// Ratio assembly from log-weights; exposed for callers that draw their own samples.
EstimateResult ratio_from_log_weights(const TargetProblem& problem, VectorXd log_w1, VectorXd log_w2);

}  // namespace coupled_is
