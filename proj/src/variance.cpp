#include "coupled_is/variance.hpp"

#include "coupled_is/parallel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace coupled_is {

namespace {

const MatrixXd& root_of(const GaussianDist& g, RootKind root) {
  return root == RootKind::kSymmetric ? g.sym_sqrt() : g.chol();
}

GaussianRatio<double> weight_ratio(const GaussianDist& target, const GaussianDist& proposal, const char* which) {
  try {
    return gaussian_ratio<double>(target.mean(), target.cov(), proposal.mean(), proposal.cov());
  } catch (const NotPositiveDefinite&) {
    throw NotPositiveDefinite(std::string("C term infinite: ") + which +
                              " precision condition fails (optimal precision minus proposal precision not PD)");
  }
}

// Weight identically one: proposal equal to its optimal marginal.
bool same_gaussian(const GaussianDist& a, const GaussianDist& b) {
  const double tol = 1e-12 * (1.0 + b.cov().norm());
  return (a.mean() - b.mean()).norm() <= tol * (1.0 + b.mean().norm()) && (a.cov() - b.cov()).norm() <= tol;
}

}  // namespace

double c_term_closed_form(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                          const GaussianDist& q2s, const MatrixXd& s_c, RootKind root) {
  const Eigen::Index d = q1.dim();
  detail::require_same_dim(q2.dim(), d, "c_term_closed_form");
  detail::require_same_dim(q1s.dim(), d, "c_term_closed_form");
  detail::require_same_dim(q2s.dim(), d, "c_term_closed_form");
  detail::require_same_dim(s_c.rows(), d, "c_term_closed_form S_c");
  detail::require_same_dim(s_c.cols(), d, "c_term_closed_form S_c");
  // One weight constant: C reduces to the mean of the other weight, which is 1.
  if (same_gaussian(q1s, q1) || same_gaussian(q2s, q2)) return 1.0;
  const auto r1 = weight_ratio(q1s, q1, "q1*/q1");
  const auto r2 = weight_ratio(q2s, q2, "q2*/q2");

  VectorXd r(2 * d), mu(2 * d);
  r << r1.mean, r2.mean;
  mu << q1.mean(), q2.mean();
  // Cov(x2, x1) = L2 S_c L1^T because z2 = S_c z1 + M w.
  const MatrixXd cross = root_of(q2, root) * s_c * root_of(q1, root).transpose();
  MatrixXd cov = MatrixXd::Zero(2 * d, 2 * d);
  cov.topLeftCorner(d, d) = q1.cov() + r1.cov;
  cov.bottomRightCorner(d, d) = q2.cov() + r2.cov;
  cov.bottomLeftCorner(d, d) = cross;
  cov.topRightCorner(d, d) = cross.transpose();
  const double log_c3 = gaussian_log_pdf<double>(r, mu, cov);
  return std::exp(r1.log_scale + r2.log_scale + log_c3);
}

VarianceReport variance_report_closed_form(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                                           const GaussianDist& q2s, const MatrixXd& s_c, RootKind root) {
  VarianceReport rep;
  try {
    rep.chi2_num = chi2_gaussians(q1s, q1);
    rep.chi2_den = chi2_gaussians(q2s, q2);
    rep.c_term = c_term_closed_form(q1, q2, q1s, q2s, s_c, root);
  } catch (const NotPositiveDefinite& e) {
    rep.finite = false;
    rep.note = e.what();
    rep.relative_asym_var = std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.relative_asym_var = rep.chi2_num + rep.chi2_den - 2.0 * (rep.c_term - 1.0);
  return rep;
}

EmpiricalVariance replicate_variance(const std::function<double(Rng&)>& run, Eigen::Index n,
                                     std::size_t replications, std::uint64_t seed) {
  if (replications < 30) throw std::invalid_argument("replicate_variance: need at least 30 replications");
  EmpiricalVariance out;
  out.estimates.assign(replications, 0.0);
  parallel_for(replications, [&](std::size_t r) {
    Rng rng(stream_seed(seed, r));
    out.estimates[r] = run(rng);
  });
  const double rr = static_cast<double>(replications);
  double mean = 0.0;
  for (std::size_t r = 0; r < replications; ++r) {
    if (!std::isfinite(out.estimates[r])) {
      throw std::runtime_error("non-finite estimate in replication " + std::to_string(r));
    }
    mean += out.estimates[r];
  }
  mean /= rr;
  double m2 = 0.0, m4 = 0.0;
  for (double e : out.estimates) {
    const double c = (e - mean) * (e - mean);
    m2 += c;
    m4 += c * c;
  }
  const double s2 = m2 / (rr - 1.0);
  m4 /= rr;
  const double var_s2 = std::max(0.0, (m4 - (rr - 3.0) / (rr - 1.0) * s2 * s2) / rr);
  out.mean_estimate = mean;
  out.n_var = static_cast<double>(n) * s2;
  out.std_err = static_cast<double>(n) * std::sqrt(var_s2);
  return out;
}

EmpiricalVariance variance_report_empirical(const TargetProblem& problem, const JointProposal& jp, Eigen::Index n,
                                            std::size_t replications, std::uint64_t seed) {
  return replicate_variance([&](Rng& rng) { return gensnis_estimate(problem, jp, n, rng).estimate; }, n,
                            replications, seed);
}

ValueWithError linearized_relative_variance(const VectorXd& log_w1, const VectorXd& log_w2) {
  const Eigen::Index n = log_w1.size();
  detail::require_same_dim(n, log_w2.size(), "linearized_relative_variance");
  if (n < 2) throw std::invalid_argument("linearized_relative_variance: need n >= 2");
  const VectorXd a = (log_w1.array() - log_w1.maxCoeff()).exp();
  const VectorXd b = (log_w2.array() - log_w2.maxCoeff()).exp();
  const VectorXd e = a / a.mean() - b / b.mean();
  const double nn = static_cast<double>(n);
  const VectorXd c = e.array() - e.mean();
  const double m2 = c.squaredNorm() / nn;
  const double m4 = c.array().square().square().sum() / nn;
  return {m2 * nn / (nn - 1.0), std::sqrt(std::max(0.0, m4 - m2 * m2) / nn)};
}

double lower_bound(double chi2_num, double chi2_den) {
  if (chi2_num < 0.0 || chi2_den < 0.0) throw std::invalid_argument("lower_bound: chi-squared inputs must be >= 0");
  const double diff = std::sqrt(chi2_den) - std::sqrt(chi2_num);
  return diff * diff;
}

ValueWithError snis_variance_floor(const std::function<double(const VectorXd&)>& f,
                                   const std::function<VectorXd(Rng&)>& sample_p, double mu, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("snis_variance_floor: need n >= 2");
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::abs(f(sample_p(rng)) - mu);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  return {mean * mean, 2.0 * mean * se};
}

DeltaMethodReport delta_method_mse(double i, double z, double var_i, double var_z, double cov_iz) {
  if (!(z > 0.0)) throw std::invalid_argument("delta_method_mse: Z must be > 0");
  if (var_i < 0.0 || var_z < 0.0) throw std::invalid_argument("delta_method_mse: variances must be >= 0");
  if (cov_iz * cov_iz > var_i * var_z * (1.0 + 1e-12)) {
    throw std::invalid_argument("delta_method_mse: |cov| exceeds sqrt(var_I var_Z) (Cauchy-Schwarz)");
  }
  const double mu = i / z;
  DeltaMethodReport r;
  r.bias = (mu * var_z - cov_iz) / (z * z);
  r.variance = var_i / (z * z) + i * i * var_z / (z * z * z * z) - 2.0 * i * cov_iz / (z * z * z);
  r.mse = r.bias * r.bias + r.variance;
  return r;
}

std::vector<LandscapeRow> variance_landscape(const GaussianDist& q1, const GaussianDist& q2, const GaussianDist& q1s,
                                             const GaussianDist& q2s, const std::vector<double>& sigma_grid,
                                             std::size_t uv_draws, std::uint64_t seed) {
  if (q1.dim() != 2) throw DimensionMismatch("variance_landscape: requires d = 2");
  std::vector<std::pair<MatrixXd, MatrixXd>> uv;
  if (uv_draws == 0) {
    uv.emplace_back(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  } else {
    for (std::size_t k = 0; k < uv_draws; ++k) {
      Rng rng(stream_seed(seed, k));
      MatrixXd u = haar_orthogonal(rng, 2);
      MatrixXd v = haar_orthogonal(rng, 2);
      uv.emplace_back(std::move(u), std::move(v));
    }
  }
  std::vector<LandscapeRow> rows;
  rows.reserve(sigma_grid.size() * sigma_grid.size() * uv.size());
  for (double s1 : sigma_grid) {
    for (double s2 : sigma_grid) {
      for (std::size_t k = 0; k < uv.size(); ++k) {
        const VectorXd sigma = (VectorXd(2) << s1, s2).finished();
        const MatrixXd s_c = uv[k].first * sigma.asDiagonal() * uv[k].second.transpose();
        const std::uint64_t uv_seed = uv_draws == 0 ? 0 : stream_seed(seed, k);
        rows.push_back({s1, s2, uv_seed, variance_report_closed_form(q1, q2, q1s, q2s, s_c)});
      }
    }
  }
  return rows;
}

}  // namespace coupled_is
