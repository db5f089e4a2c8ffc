#pragma once

#include "coupled_is/density.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coupled_is {

/// expm(A - A^T) for square A. Orthogonal with determinant +1.
MatrixXd orthogonal_from_skew(const MatrixXd& a);

/// Gradient of a scalar loss L(Q), Q = orthogonal_from_skew(A), with respect to
/// the strictly lower triangle of A, given G = dL/dQ. Uses the Frechet
/// derivative of expm obtained from a 2d x 2d block exponential.
MatrixXd orthogonal_from_skew_adjoint(const MatrixXd& a, const MatrixXd& grad_q);

/// Unconstrained SVD parameters: S_c = U diag(tanh v) V^T with
/// U = expm(A_u - A_u^T), V = expm(A_v - A_v^T). Only strictly lower entries of
/// A_u, A_v are used.
struct GaussianCouplingParams {
  MatrixXd a_u;
  MatrixXd a_v;
  VectorXd v;

  static GaussianCouplingParams diagonal(const VectorXd& v);
  Eigen::Index dim() const { return v.size(); }
  MatrixXd u() const { return orthogonal_from_skew(a_u); }
  MatrixXd v_mat() const { return orthogonal_from_skew(a_v); }
  VectorXd sigma() const { return v.array().tanh().matrix(); }
  MatrixXd s_c() const;

  /// Flattened free parameters: strictly lower A_u (row-major), then A_v, then v.
  VectorXd flatten() const;
  static GaussianCouplingParams unflatten(const VectorXd& theta, Eigen::Index d);
  static Eigen::Index flat_size(Eigen::Index d) { return d * (d - 1) + d; }
};

enum class CouplingKind { kCrn, kAntithetic, kIndependent, kSignMask, kGaussian, kMixture };

std::string to_string(CouplingKind kind);

/// Pair of n x d blocks, one row per draw.
struct SamplePair {
  MatrixXd first;
  MatrixXd second;
};

/// A distribution on (0,1)^d x (0,1)^d with uniform marginals.
///
/// Every non-mixture variant is a Gaussian copula in normal scores:
/// z1 ~ N(0, I), z2 = S_c z1 + M w with w ~ N(0, I) and M M^T = I - S_c S_c^T.
/// CRN is S_c = I, antithetic S_c = -I, a sign mask S_c = diag(s), independent
/// S_c = 0. Uniforms are u = Phi(z).
class Coupling {
 public:
  static Coupling crn(Eigen::Index d);
  static Coupling antithetic(Eigen::Index d);
  static Coupling independent(Eigen::Index d);
  /// Per-coordinate CRN (+1) or antithetic (-1).
  static Coupling sign_mask(const VectorXd& signs);
  static Coupling gaussian(GaussianCouplingParams params);
  /// Throws NotPositiveDefinite if I - S S^T has an eigenvalue below -1e-12.
  static Coupling gaussian(const MatrixXd& s_c);
  static Coupling mixture(const VectorXd& weights, std::vector<Coupling> components);

  CouplingKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  const MatrixXd& s_c() const { return s_c_; }
  const MatrixXd& m() const { return m_; }
  const std::optional<GaussianCouplingParams>& params() const { return params_; }
  const VectorXd& weights() const { return weights_; }
  const std::vector<Coupling>& components() const { return components_; }
  /// True when z2 is a deterministic function of z1 (M = 0).
  bool deterministic() const { return deterministic_; }
  bool absolutely_continuous() const;

  /// Standard-normal scores (z1, z2). z1 is drawn first, then w (skipped when M = 0).
  SamplePair sample_normal(Rng& rng, Eigen::Index n) const;
  SamplePair sample_pair(Rng& rng, Eigen::Index n) const;
  /// z2 rows for given z1 and w rows (non-mixture only).
  MatrixXd second_from_noise(const MatrixXd& z1, const MatrixXd& w) const;

  /// log c(u1, u2). Throws std::domain_error for singular variants.
  double log_density(const VectorXd& u1, const VectorXd& u2) const;
  double log_density_normal(const VectorXd& z1, const VectorXd& z2) const;

  nlohmann::json to_json() const;
  static Coupling from_json(const nlohmann::json& doc);

 private:
  Coupling() = default;
  static Coupling from_matrices(CouplingKind kind, MatrixXd s, MatrixXd m, bool deterministic);

  CouplingKind kind_{};
  Eigen::Index dim_ = 0;
  MatrixXd s_c_;
  MatrixXd m_;
  bool deterministic_ = false;
  std::optional<GaussianCouplingParams> params_;
  VectorXd signs_;
  // Cached for log_density: Cholesky of I - S S^T.
  MatrixXd cond_chol_;
  double cond_log_det_ = 0.0;
  bool has_density_ = false;
  VectorXd weights_;
  std::vector<Coupling> components_;
};

/// Largest-remainder split of n into counts proportional to weights.
std::vector<Eigen::Index> stratified_counts(const VectorXd& weights, Eigen::Index n);

}  // namespace coupled_is
