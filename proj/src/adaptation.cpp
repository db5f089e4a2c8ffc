#include "coupled_is/adaptation.hpp"

#include "coupled_is/parallel.hpp"
#include "coupled_is/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>

namespace coupled_is {

namespace {

double lse(const VectorXd& v) { return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

VectorXd softmax(const VectorXd& s) { return (s.array() - lse(s)).exp(); }

// Joint log-weights log w1(x1) + log w2(x2) without the known scale.
VectorXd joint_log_weights(const TargetProblem& problem, const MarginalTransport& t1, const MarginalTransport& t2,
                           const MatrixXd& z1, const MatrixXd& z2, MatrixXd* x2_out = nullptr) {
  const MatrixXd x1 = t1.forward_from_normal_rows(z1);
  MatrixXd x2 = t2.forward_from_normal_rows(z2);
  VectorXd s = log_weights(problem, t1, x1, true, "numerator") + log_weights(problem, t2, x2, false, "denominator");
  if (x2_out) *x2_out = std::move(x2);
  return s;
}

// Matrix of the linear map G -> d/dA (strictly lower, row-major) for Q = expm(A - A^T).
MatrixXd skew_adjoint_matrix(const MatrixXd& a) {
  const Eigen::Index d = a.rows();
  const Eigen::Index p = d * (d - 1) / 2;
  MatrixXd out(p, d * d);
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index l = 0; l < d; ++l) {
      MatrixXd e = MatrixXd::Zero(d, d);
      e(k, l) = 1.0;
      const MatrixXd da = orthogonal_from_skew_adjoint(a, e);
      Eigen::Index idx = 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) out(idx++, k * d + l) = da(i, j);
      }
    }
  }
  return out;
}

// Row-major vec of the outer product x y^T.
VectorXd outer_vec(const VectorXd& x, const VectorXd& y) {
  const Eigen::Index d = x.size();
  VectorXd out(d * d);
  for (Eigen::Index k = 0; k < d; ++k) out.segment(k * d, d) = x(k) * y;
  return out;
}

GradientEstimate weighted_mean_gradient(const VectorXd& s, const MatrixXd& per_sample) {
  const VectorXd wbar = softmax(s);
  GradientEstimate out;
  out.grad = per_sample.transpose() * wbar;
  const MatrixXd centered = per_sample.rowwise() - out.grad.transpose();
  out.std_err = (centered.array().square().colwise() * wbar.array().square()).colwise().sum().sqrt().transpose();
  out.log_objective = lse(s) - std::log(static_cast<double>(s.size()));
  return out;
}

void require_differentiable(const TargetProblem& problem) {
  if (!problem.differentiable()) {
    throw std::invalid_argument(
        "pathwise gradient needs grad_log_p_tilde and grad_log_f; use the score gradient for non-differentiable f");
  }
}

}  // namespace

TargetProblem problem_from_optimal(const GaussianDist& q1s, const GaussianDist& q2s) {
  TargetProblem p;
  p.dim = static_cast<int>(q1s.dim());
  p.log_p_tilde = [q2s](const VectorXd& x) { return q2s.log_pdf(x); };
  p.grad_log_p_tilde = [q2s](const VectorXd& x) { return q2s.grad_log_pdf(x); };
  p.log_f = [q1s, q2s](const VectorXd& x) { return q1s.log_pdf(x) - q2s.log_pdf(x); };
  p.grad_log_f = [q1s, q2s](const VectorXd& x) -> VectorXd { return q1s.grad_log_pdf(x) - q2s.grad_log_pdf(x); };
  p.log_normalizer = 0.0;
  return p;
}

ObjectiveEstimate objective_from_normals(const TargetProblem& problem, const MarginalTransport& t1,
                                         const MarginalTransport& t2, const MatrixXd& z1, const MatrixXd& z2) {
  const VectorXd s = joint_log_weights(problem, t1, t2, z1, z2);
  const double m = static_cast<double>(s.size());
  const double top = lse(s);
  if (top == -std::numeric_limits<double>::infinity()) throw std::domain_error("objective: all joint weights are zero");
  const VectorXd r = (s.array() - top).exp() * m;  // mean one
  const double sd = std::sqrt((r.array() - 1.0).square().sum() / std::max(1.0, m - 1.0));
  ObjectiveEstimate out;
  out.log_value = 2.0 * problem.log_scale + top - std::log(m);
  out.value = std::exp(out.log_value);
  out.rel_std_err = sd / std::sqrt(m);
  out.std_err = out.value * out.rel_std_err;
  return out;
}

ObjectiveEstimate objective_estimate(const TargetProblem& problem, const JointProposal& jp, Eigen::Index m, Rng& rng) {
  const SamplePair z = jp.coupling.sample_normal(rng, m);
  return objective_from_normals(problem, jp.t1, jp.t2, z.first, z.second);
}

double log_objective_from_noise(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& params, const MatrixXd& z1,
                                const MatrixXd& w) {
  const MatrixXd z2 = Coupling::gaussian(params).second_from_noise(z1, w);
  const VectorXd s = joint_log_weights(problem, t1, t2, z1, z2);
  return lse(s) - std::log(static_cast<double>(s.size()));
}

GradientEstimate pathwise_gradient_from_noise(const TargetProblem& problem, const MarginalTransport& t1,
                                              const MarginalTransport& t2, const GaussianCouplingParams& params,
                                              const MatrixXd& z1, const MatrixXd& w) {
  require_differentiable(problem);
  const Eigen::Index d = params.dim();
  const Eigen::Index m = z1.rows();
  const MatrixXd u = params.u();
  const MatrixXd v = params.v_mat();
  const VectorXd sigma = params.sigma();
  const VectorXd sech = params.v.array().cosh().inverse().matrix();
  const MatrixXd a = z1 * v;
  const MatrixXd b = a * sigma.asDiagonal() + w * sech.asDiagonal();
  const MatrixXd z2 = b * u.transpose();
  MatrixXd x2;
  const VectorXd s = joint_log_weights(problem, t1, t2, z1, z2, &x2);

  const MatrixXd pu = skew_adjoint_matrix(params.a_u);
  const MatrixXd pv = skew_adjoint_matrix(params.a_v);
  const Eigen::Index np = d * (d - 1) / 2;
  MatrixXd per_sample(m, GaussianCouplingParams::flat_size(d));
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd xi = x2.row(i).transpose();
    const VectorXd gx = problem.grad_log_p_tilde(xi) - t2.grad_log_pdf(xi);
    const VectorXd gz = t2.normal_jacobian_diag(z2.row(i).transpose()).cwiseProduct(t2.linear().transpose() * gx);
    const VectorXd h = u.transpose() * gz;
    const VectorXd bi = b.row(i).transpose();
    const VectorXd ai = a.row(i).transpose();
    const VectorXd wi = w.row(i).transpose();
    per_sample.row(i).segment(0, np) = (pu * outer_vec(gz, bi)).transpose();
    per_sample.row(i).segment(np, np) = (pv * outer_vec(z1.row(i).transpose(), sigma.cwiseProduct(h))).transpose();
    per_sample.row(i).tail(d) =
        (h.array() * (ai.array() * sech.array().square() - wi.array() * sech.array() * sigma.array())).transpose();
  }
  return weighted_mean_gradient(s, per_sample);
}

GradientEstimate pathwise_gradient(const TargetProblem& problem, const MarginalTransport& t1,
                                   const MarginalTransport& t2, const GaussianCouplingParams& params, Eigen::Index m,
                                   Rng& rng) {
  if (m < 2) throw std::invalid_argument("pathwise_gradient: M must be >= 2");
  const MatrixXd z1 = standard_normal_rows(rng, m, params.dim());
  const MatrixXd w = standard_normal_rows(rng, m, params.dim());
  return pathwise_gradient_from_noise(problem, t1, t2, params, z1, w);
}

VectorXd grad_log_coupling_density(const GaussianCouplingParams& params, const VectorXd& z1, const VectorXd& z2) {
  const Eigen::Index d = params.dim();
  const MatrixXd u = params.u();
  const MatrixXd v = params.v_mat();
  const VectorXd sigma = params.sigma();
  const VectorXd one_minus = params.v.array().cosh().inverse().square().matrix();
  const VectorXd a = v.transpose() * z1;
  const VectorXd r = u.transpose() * z2 - sigma.cwiseProduct(a);
  const VectorXd q = r.cwiseQuotient(one_minus);
  const Eigen::Index np = d * (d - 1) / 2;
  VectorXd g(GaussianCouplingParams::flat_size(d));
  g.segment(0, np) = skew_adjoint_matrix(params.a_u) * outer_vec(-z2, q);
  g.segment(np, np) = skew_adjoint_matrix(params.a_v) * outer_vec(z1, sigma.cwiseProduct(q));
  g.tail(d) = (sigma.array() + one_minus.array() * (q.array() * a.array() - q.array().square() * sigma.array())).matrix();
  return g;
}

GradientEstimate score_gradient_from_samples(const TargetProblem& problem, const MarginalTransport& t1,
                                             const MarginalTransport& t2, const GaussianCouplingParams& params,
                                             const MatrixXd& z1, const MatrixXd& z2) {
  const Eigen::Index d = params.dim();
  if (!(params.v.array().cosh().inverse() > 0.0).all()) {
    throw std::domain_error("score gradient: singular coupling (|sigma| = 1) has no density");
  }
  const VectorXd s = joint_log_weights(problem, t1, t2, z1, z2);
  const MatrixXd u = params.u();
  const MatrixXd v = params.v_mat();
  const VectorXd sigma = params.sigma();
  const VectorXd one_minus = params.v.array().cosh().inverse().square().matrix();
  const MatrixXd pu = skew_adjoint_matrix(params.a_u);
  const MatrixXd pv = skew_adjoint_matrix(params.a_v);
  const Eigen::Index np = d * (d - 1) / 2;
  MatrixXd per_sample(z1.rows(), GaussianCouplingParams::flat_size(d));
  for (Eigen::Index i = 0; i < z1.rows(); ++i) {
    const VectorXd z1i = z1.row(i).transpose();
    const VectorXd z2i = z2.row(i).transpose();
    const VectorXd a = v.transpose() * z1i;
    const VectorXd q = (u.transpose() * z2i - sigma.cwiseProduct(a)).cwiseQuotient(one_minus);
    per_sample.row(i).segment(0, np) = (pu * outer_vec(-z2i, q)).transpose();
    per_sample.row(i).segment(np, np) = (pv * outer_vec(z1i, sigma.cwiseProduct(q))).transpose();
    per_sample.row(i).tail(d) =
        (sigma.array() + one_minus.array() * (q.array() * a.array() - q.array().square() * sigma.array())).transpose();
  }
  return weighted_mean_gradient(s, per_sample);
}

GradientEstimate score_gradient(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& params, Eigen::Index m,
                                Rng& rng) {
  if (m < 2) throw std::invalid_argument("score_gradient: M must be >= 2");
  const SamplePair z = Coupling::gaussian(params).sample_normal(rng, m);
  return score_gradient_from_samples(problem, t1, t2, params, z.first, z.second);
}

double reweighted_log_objective(const TargetProblem& problem, const MarginalTransport& t1,
                                const MarginalTransport& t2, const GaussianCouplingParams& ref,
                                const GaussianCouplingParams& candidate, const MatrixXd& z1, const MatrixXd& z2) {
  VectorXd s = joint_log_weights(problem, t1, t2, z1, z2);
  const Coupling c_ref = Coupling::gaussian(ref);
  const Coupling c_new = Coupling::gaussian(candidate);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const VectorXd a = z1.row(i).transpose();
    const VectorXd b = z2.row(i).transpose();
    s(i) += c_new.log_density_normal(a, b) - c_ref.log_density_normal(a, b);
  }
  return lse(s) - std::log(static_cast<double>(s.size()));
}

void AdaptConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("AdaptConfig: iterations must be >= 1");
  if (batch < 2) throw std::invalid_argument("AdaptConfig: batch must be >= 2");
  if (!(lr_end > 0.0) || lr_start < lr_end) throw std::invalid_argument("AdaptConfig: need lr_start >= lr_end > 0");
  if (selection_samples < 2) throw std::invalid_argument("AdaptConfig: selection_samples must be >= 2");
}

namespace {

StartTrace run_start(const TargetProblem& problem, const MarginalTransport& t1, const MarginalTransport& t2,
                     const AdaptConfig& config, const AdaptStart& start, std::uint64_t seed) {
  Rng rng(seed);
  StartTrace trace;
  trace.label = start.label;
  // Decisions use the kernel only; the known scale is added to reported values.
  const double log_shift = 2.0 * problem.log_scale;
  std::vector<double> kernel_log_objective;
  const Eigen::Index d = start.params.dim();
  VectorXd theta = start.params.flatten();
  VectorXd m1 = VectorXd::Zero(theta.size());
  VectorXd m2 = VectorXd::Zero(theta.size());
  VectorXd m2_max = VectorXd::Zero(theta.size());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const int t_total = config.iterations;
  for (int t = 0; t < t_total; ++t) {
    const double frac = t_total > 1 ? static_cast<double>(t) / (t_total - 1) : 0.0;
    const double lr = config.lr_start + (config.lr_end - config.lr_start) * frac;
    const auto params = GaussianCouplingParams::unflatten(theta, d);
    GradientEstimate g;
    double std_err = 0.0;
    try {
      if (config.gradient == GradientKind::kPathwise) {
        const MatrixXd z1 = standard_normal_rows(rng, config.batch, d);
        const MatrixXd w = standard_normal_rows(rng, config.batch, d);
        g = pathwise_gradient_from_noise(problem, t1, t2, params, z1, w);
        const MatrixXd z2 = Coupling::gaussian(params).second_from_noise(z1, w);
        std_err = objective_from_normals(problem, t1, t2, z1, z2).rel_std_err;
      } else {
        const SamplePair z = Coupling::gaussian(params).sample_normal(rng, config.batch);
        g = score_gradient_from_samples(problem, t1, t2, params, z.first, z.second);
        std_err = objective_from_normals(problem, t1, t2, z.first, z.second).rel_std_err;
      }
    } catch (const NonFiniteWeight&) {
      trace.diverged = true;
      break;
    }
    if (!g.grad.allFinite() || !std::isfinite(g.log_objective)) {
      trace.diverged = true;
      break;
    }
    kernel_log_objective.push_back(g.log_objective);
    trace.log_objective.push_back(g.log_objective + log_shift);
    trace.std_err.push_back(std_err);
    trace.lr.push_back(lr);
    trace.params.push_back(theta);
    if (config.amsgrad) {
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * g.grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.grad.cwiseAbs2();
      m2_max = m2_max.cwiseMax(m2);
      const double c1 = 1.0 - std::pow(kBeta1, t + 1);
      const double c2 = 1.0 - std::pow(kBeta2, t + 1);
      theta += lr * (m1 / c1).cwiseQuotient(((m2_max / c2).cwiseSqrt().array() + kEps).matrix());
    } else {
      theta += lr * g.grad;
    }
  }
  trace.final_params = GaussianCouplingParams::unflatten(theta, d);
  if (!trace.diverged && !trace.log_objective.empty()) {
    const std::size_t window = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, config.smoothing_window)),
                                                      kernel_log_objective.size());
    trace.smoothed_final = std::accumulate(kernel_log_objective.end() - static_cast<std::ptrdiff_t>(window),
                                           kernel_log_objective.end(), 0.0) /
                           static_cast<double>(window);
  } else {
    trace.smoothed_final = -std::numeric_limits<double>::infinity();
  }
  return trace;
}

}  // namespace

AdaptTrace sga_optimize(const TargetProblem& problem, const MarginalTransport& t1, const MarginalTransport& t2,
                        const AdaptConfig& config) {
  config.validate();
  const Eigen::Index d = t1.dim();
  detail::require_same_dim(t2.dim(), d, "sga_optimize marginals");
  if (config.gradient == GradientKind::kPathwise) require_differentiable(problem);
  std::vector<AdaptStart> starts = config.starts;
  if (starts.empty()) {
    starts.push_back({"identity", GaussianCouplingParams::diagonal(VectorXd::Constant(d, config.start_v))});
    starts.push_back({"negative_identity", GaussianCouplingParams::diagonal(VectorXd::Constant(d, -config.start_v))});
    starts.push_back({"zero", GaussianCouplingParams::diagonal(VectorXd::Zero(d))});
  }
  AdaptTrace out;
  out.starts.resize(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) {
    out.starts[k] = run_start(problem, t1, t2, config, starts[k], stream_seed(config.seed, k));
  });
  std::size_t best = starts.size();
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (out.starts[k].diverged) continue;
    if (best == starts.size() || out.starts[k].smoothed_final > out.starts[best].smoothed_final) best = k;
  }
  if (best == starts.size()) {
    std::string labels;
    for (const auto& s : out.starts) labels += " " + s.label + "(" + std::to_string(s.log_objective.size()) + " its)";
    throw std::runtime_error("sga_optimize: every start diverged:" + labels);
  }
  const StartTrace& chosen = out.starts[best];
  out.log_objective = chosen.log_objective;
  out.std_err = chosen.std_err;
  out.lr = chosen.lr;
  out.final_params = chosen.final_params;
  out.chosen_start = chosen.label;
  out.coupling = Coupling::gaussian(chosen.final_params);

  // Compare against the baselines on common noise, on the kernel.
  TargetProblem kernel = problem;
  kernel.log_scale = 0.0;
  Rng rng(stream_seed(config.seed, 0x5e1ec7ULL));
  const MatrixXd z1 = standard_normal_rows(rng, config.selection_samples, d);
  const MatrixXd w = standard_normal_rows(rng, config.selection_samples, d);
  const std::vector<std::pair<std::string, Coupling>> candidates{
      {"optimized", out.coupling}, {"crn", Coupling::crn(d)}, {"antithetic", Coupling::antithetic(d)},
      {"independent", Coupling::independent(d)}};
  double best_value = -std::numeric_limits<double>::infinity();
  std::size_t best_candidate = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    double value = -std::numeric_limits<double>::infinity();
    try {
      value = objective_from_normals(kernel, t1, t2, z1, candidates[k].second.second_from_noise(z1, w)).log_value;
    } catch (const NonFiniteWeight&) {
    }
    out.selection.emplace_back(candidates[k].first, value);
    // Ties go to a baseline.
    if (value > best_value || (k > 0 && best_candidate == 0 && value == best_value)) {
      best_value = value;
      best_candidate = k;
    }
  }
  for (auto& entry : out.selection) entry.second += 2.0 * problem.log_scale;
  out.final_objective = best_value + 2.0 * problem.log_scale;
  if (best_candidate != 0) {
    out.coupling = candidates[best_candidate].second;
    out.chosen_start = "baseline:" + candidates[best_candidate].first;
  }
  return out;
}

namespace {

double target_log(const TargetProblem& problem, const VectorXd& x, bool with_f) {
  return problem.log_p_tilde(x) + (with_f ? problem.log_f(x) : 0.0);
}

VectorXd target_grad(const TargetProblem& problem, const VectorXd& x, bool with_f) {
  VectorXd g = problem.grad_log_p_tilde(x);
  if (with_f) g += problem.grad_log_f(x);
  return g;
}

// Newton ascent with a finite-difference Hessian of the analytic gradient.
std::optional<GaussianDist> laplace(const TargetProblem& problem, VectorXd x, bool with_f) {
  const Eigen::Index d = x.size();
  MatrixXd hess(d, d);
  auto hessian = [&](const VectorXd& at) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(at(j)));
      VectorXd xp = at, xm = at;
      xp(j) += h;
      xm(j) -= h;
      hess.col(j) = (target_grad(problem, xp, with_f) - target_grad(problem, xm, with_f)) / (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
  };
  double value = target_log(problem, x, with_f);
  for (int it = 0; it < 200; ++it) {
    const VectorXd g = target_grad(problem, x, with_f);
    if (g.norm() < 1e-9) break;
    hessian(x);
    Eigen::LLT<MatrixXd> llt(-hess);
    VectorXd step = llt.info() == Eigen::Success ? VectorXd(llt.solve(g)) : VectorXd(0.1 * g);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      const VectorXd cand = x + alpha * step;
      const double v = target_log(problem, cand, with_f);
      if (std::isfinite(v) && v >= value) {
        moved = v > value || alpha * step.norm() > 0.0;
        x = cand;
        value = v;
        break;
      }
    }
    if (!moved || alpha * step.norm() < 1e-12) break;
  }
  hessian(x);
  Eigen::LLT<MatrixXd> llt(-hess);
  if (llt.info() != Eigen::Success) return std::nullopt;
  try {
    return GaussianDist(x, llt.solve(MatrixXd::Identity(d, d)));
  } catch (const NotPositiveDefinite&) {
    return std::nullopt;
  }
}

MarginalTransport transport_from_moments(const VectorXd& mean, const MatrixXd& cov, const MarginalAdaptConfig& config) {
  const GaussianDist g(mean, cov);
  if (config.family == MarginalFamily::kGaussian) return MarginalTransport::gaussian(g);
  const double dof = config.dof;
  const GaussianDist scaled(mean, cov * ((dof - 2.0) / dof));
  return MarginalTransport::elliptical(LinearEllipticalDist(mean, scaled.sym_sqrt(), BaseFamily::kStudentT, dof));
}

AdaptedMarginal fit_one(const TargetProblem& problem, const MarginalAdaptConfig& config, Rng& rng, bool with_f) {
  const Eigen::Index d = problem.dim;
  const Eigen::Index n = config.n_adapt;
  VectorXd mean = config.initial_mean ? *config.initial_mean : VectorXd::Zero(d);
  MatrixXd cov = MatrixXd::Identity(d, d);
  if (config.laplace_start && problem.differentiable()) {
    if (auto lap = laplace(problem, mean, with_f)) {
      mean = lap->mean();
      cov = lap->cov();
    }
  }
  const std::string stream = with_f ? "numerator adaptation" : "denominator adaptation";
  // Pooled samples with their target log-density and log-density under every proposal so far.
  const Eigen::Index total = n * config.rounds;
  MatrixXd pool(total, d);
  VectorXd log_target(total);
  MatrixXd log_q(total, config.rounds);
  std::vector<MarginalTransport> proposals;
  double ess = 0.0;
  for (int round = 0; round < config.rounds; ++round) {
    proposals.push_back(transport_from_moments(mean, cov, config));
    const MarginalTransport& q = proposals.back();
    const Eigen::Index begin = n * round, used = begin + n;
    pool.middleRows(begin, n) = q.forward_from_normal_rows(standard_normal_rows(rng, n, d));
    for (Eigen::Index i = begin; i < used; ++i) {
      const VectorXd x = pool.row(i).transpose();
      const double v = target_log(problem, x, with_f);
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw NonFiniteWeight(stream, static_cast<std::size_t>(i), v);
      }
      log_target(i) = v;
      for (int r = 0; r < round; ++r) log_q(i, r) = proposals[static_cast<std::size_t>(r)].log_pdf(x);
    }
    for (Eigen::Index i = 0; i < used; ++i) log_q(i, round) = q.log_pdf(pool.row(i).transpose());
    // Deterministic-mixture weights against the equal mixture of the proposals used.
    VectorXd lw(used);
    for (Eigen::Index i = 0; i < used; ++i) {
      lw(i) = log_target(i) - (lse(log_q.row(i).head(round + 1).transpose()) - std::log(round + 1.0));
    }
    const VectorXd w = softmax(lw);
    ess = 1.0 / w.squaredNorm();
    const auto x = pool.topRows(used);
    const VectorXd m = x.transpose() * w;
    const MatrixXd c = x.rowwise() - m.transpose();
    MatrixXd s = c.transpose() * w.asDiagonal() * c;
    s = 0.5 * (s + s.transpose()).eval();
    // A weighted covariance from few effective samples is near-singular; shrink towards the last fit.
    const double alpha = ess / (ess + static_cast<double>(d));
    mean = alpha * m + (1.0 - alpha) * mean;
    cov = alpha * s + (1.0 - alpha) * cov + 1e-10 * MatrixXd::Identity(d, d);
    if (round + 1 < config.rounds) cov *= config.inflation;
  }
  // Early rounds may start far off; only the pooled weights behind the final fit must not collapse.
  if (!(ess >= 5.0)) {
    throw std::runtime_error("adapt_marginals: effective sample size " + std::to_string(ess) +
                             " < 5 after the last round; use more rounds, more samples or heavier tails");
  }
  return {transport_from_moments(mean, config.inflation * cov, config), GaussianDist(mean, cov), ess};
}

}  // namespace

AdaptedMarginals adapt_marginals(const TargetProblem& problem, const MarginalAdaptConfig& config, Rng& rng) {
  if (config.rounds < 1) throw std::invalid_argument("adapt_marginals: rounds must be >= 1");
  if (config.n_adapt < 2) throw std::invalid_argument("adapt_marginals: n_adapt must be >= 2");
  if (config.family == MarginalFamily::kStudentT && !(config.dof > 2.0)) {
    throw std::invalid_argument("adapt_marginals: Student-t family needs dof > 2 for moment matching");
  }
  AdaptedMarginal num = fit_one(problem, config, rng, true);
  AdaptedMarginal den = fit_one(problem, config, rng, false);
  return {std::move(num), std::move(den)};
}

}  // namespace coupled_is
