#include "coupled_is/experiments.hpp"

#include "coupled_is/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace coupled_is {

namespace {

struct BlrSetup {
  BlrModel model;
  VectorXd x_test;
  double y_test = 0.0;
  OptimalMarginals optimal;
};

// Test point two predictive standard deviations above the predictive mean.
BlrSetup blr_setup(Eigen::Index dim, Eigen::Index n_data, double sigma2, std::uint64_t seed) {
  Rng rng(stream_seed(seed, 0));
  BlrModel model = make_blr_data(rng, n_data, dim, sigma2);
  VectorXd x_test = VectorXd::LinSpaced(dim, 1.0, -0.5);
  const GaussianDist post = blr_posterior(model);
  const double sd = std::sqrt(sigma2 + x_test.dot(post.cov() * x_test));
  const double y_test = x_test.dot(post.mean()) + 2.0 * sd;
  OptimalMarginals optimal = blr_optimal_marginals(model, x_test, y_test);
  return {std::move(model), std::move(x_test), y_test, std::move(optimal)};
}

Eigen::Index per_round(Eigen::Index total, int rounds) {
  if (rounds < 1) throw std::invalid_argument("adapt_rounds must be >= 1");
  return std::max<Eigen::Index>(2, total / rounds);
}

GaussianDist perturbed(const GaussianDist& g, double scale, double shift) {
  return {g.mean() + VectorXd::Constant(g.dim(), shift), scale * g.cov()};
}

}  // namespace

LandscapeInputs landscape_inputs(const LandscapeConfig& config) {
  if (config.preset == "figure") {
    const MatrixXd eye = MatrixXd::Identity(2, 2);
    const VectorXd a = (VectorXd(2) << -0.25, 0.25).finished();
    GaussianDist q1s(a, 0.25 * eye);
    GaussianDist q2s(-a, eye);
    GaussianDist q1(-a, 4.0 * q1s.cov());
    GaussianDist q2(a, 4.0 * q2s.cov());
    return {q1s, q2s, q1, q2};
  }
  if (config.preset == "blr") {
    const BlrSetup s = blr_setup(2, config.n_data, config.sigma2, config.seed);
    return {s.optimal.q1s, s.optimal.q2s, perturbed(s.optimal.q1s, config.proposal_scale, 0.0),
            perturbed(s.optimal.q2s, config.proposal_scale, 0.0)};
  }
  throw std::invalid_argument("landscape preset must be \"figure\" or \"blr\", got \"" + config.preset + "\"");
}

std::vector<LandscapeRow> run_landscape(const LandscapeConfig& config) {
  const LandscapeInputs in = landscape_inputs(config);
  std::vector<double> grid = config.grid;
  if (grid.empty()) {
    for (int k = 0; k <= 20; ++k) grid.push_back(-0.99 + 0.099 * k);
  }
  return variance_landscape(in.q1, in.q2, in.q1s, in.q2s, grid, config.uv_draws, stream_seed(config.seed, 1));
}

std::vector<ConsistencyRow> run_consistency(const ConsistencyConfig& config) {
  const BlrSetup s = blr_setup(config.dim, config.n_data, config.sigma2, config.seed);
  const TargetProblem problem = blr_problem(s.model, s.x_test, s.y_test);
  const double truth = blr_predictive_truth(s.model, s.x_test, s.y_test);
  const auto t1 = MarginalTransport::gaussian(perturbed(s.optimal.q1s, config.proposal_scale, config.proposal_shift));
  const auto t2 = MarginalTransport::gaussian(perturbed(s.optimal.q2s, config.proposal_scale, -config.proposal_shift));
  const JointProposal jp(t1, t2, Coupling::independent(config.dim));
  const std::vector<std::string> names{"uis", "snis", "gensnis", "gensnis_recycled"};

  const std::size_t per_n = names.size() * config.replications;
  std::vector<ConsistencyRow> rows(config.sample_sizes.size() * per_n);
  parallel_for(rows.size(), [&](std::size_t idx) {
    const std::size_t ni = idx / per_n;
    const std::size_t e = (idx % per_n) / config.replications;
    const std::size_t r = idx % config.replications;
    const Eigen::Index n = config.sample_sizes[ni];
    Rng rng(stream_seed(stream_seed(config.seed, 1 + ni), e * config.replications + r));
    EstimateResult est;
    switch (e) {
      case 0: est = uis_estimate(problem, t1, n, rng); break;
      case 1: est = snis_estimate(problem, t2, n, rng); break;
      case 2: est = gensnis_estimate(problem, jp, n, rng); break;
      default: est = gensnis_recycled(problem, jp, n, rng); break;
    }
    rows[idx] = {names[e], n, r, est.estimate, est.std_err, truth};
  });
  return rows;
}

LogregSetup logreg_setup(const LogregConfig& config) {
  Rng rng(stream_seed(config.seed, 0));
  LogregSetup s;
  s.data = make_logreg_data(rng, config.n_data, config.dim);
  s.x_test = make_corrupted_test(s.data.model, rng, config.n_test, config.test_dof, config.test_scale2);
  s.y_test = draw_labels(s.x_test, s.data.theta_true, rng);
  s.problem = logreg_predictive_problem(s.data.model, s.x_test, s.y_test);
  return s;
}

ReferenceTruth blr_reference_truth(const BlrModel& m, const VectorXd& x_test, double y_test) {
  ReferenceTruth t;
  t.value = blr_predictive_truth(m, x_test, y_test);
  t.exact = true;
  return t;
}

ReferenceTruth logreg_reference_truth(const LogregSetup& setup, const LogregConfig& config) {
  if (config.reference_samples < 10 * config.m_eval) {
    throw std::invalid_argument("reference_samples must be at least 10 times m_eval");
  }
  MarginalAdaptConfig mc;
  mc.family = config.family;
  mc.dof = config.family_dof;
  mc.n_adapt = per_round(config.reference_adapt, config.adapt_rounds);
  mc.rounds = config.adapt_rounds;
  Rng arng(stream_seed(config.seed, 4));
  const AdaptedMarginals marg = adapt_marginals(setup.problem, mc, arng);
  AdaptConfig ac = config.coupling;
  ac.seed = stream_seed(config.seed, 5);
  const AdaptTrace trace = sga_optimize(setup.problem, marg.numerator.transport, marg.denominator.transport, ac);
  Rng rng(stream_seed(config.seed, 6));
  const JointProposal jp(marg.numerator.transport, marg.denominator.transport, trace.coupling);
  const EstimateResult est = gensnis_estimate(setup.problem, jp, config.reference_samples, rng);
  ReferenceTruth t;
  t.value = est.estimate;
  t.std_err = est.std_err;
  t.samples = config.reference_samples;
  t.warning = !(est.std_err <= 0.01 * est.estimate);
  return t;
}

LogregResult run_logreg(const LogregConfig& config) {
  const LogregSetup setup = logreg_setup(config);
  LogregResult out;
  out.truth = logreg_reference_truth(setup, config);

  MarginalAdaptConfig mc;
  mc.family = config.family;
  mc.dof = config.family_dof;
  mc.n_adapt = per_round(config.m_adapt, config.adapt_rounds);
  mc.rounds = config.adapt_rounds;
  Rng arng(stream_seed(config.seed, 1));
  const AdaptedMarginals marg = adapt_marginals(setup.problem, mc, arng);
  const MarginalTransport& t1 = marg.numerator.transport;
  const MarginalTransport& t2 = marg.denominator.transport;
  AdaptConfig ac = config.coupling;
  ac.seed = stream_seed(config.seed, 2);
  out.trace = sga_optimize(setup.problem, t1, t2, ac);

  const std::vector<std::string> methods{"optimized", "independent", "snis_q1", "snis_q2"};
  const JointProposal opt(t1, t2, out.trace.coupling);
  const JointProposal ind(t1, t2, Coupling::independent(t1.dim()));
  const double log_truth = std::log(out.truth.value);
  const std::uint64_t eval_seed = stream_seed(config.seed, 3);
  out.rows.resize(methods.size() * config.replications);
  parallel_for(out.rows.size(), [&](std::size_t idx) {
    const std::size_t k = idx / config.replications;
    const std::size_t r = idx % config.replications;
    Rng rng(stream_seed(stream_seed(eval_seed, r), k));
    EstimateResult est;
    switch (k) {
      case 0: est = gensnis_estimate(setup.problem, opt, config.m_eval, rng); break;
      case 1: est = gensnis_estimate(setup.problem, ind, config.m_eval, rng); break;
      case 2: est = snis_estimate(setup.problem, t1, config.m_eval, rng); break;
      default: est = snis_estimate(setup.problem, t2, config.m_eval, rng); break;
    }
    const double log_est = est.log_numerator - est.log_denominator;
    out.rows[idx] = {methods[k], r, est.estimate, out.truth.value, log_est - log_truth};
  });
  return out;
}

AdaptTrace run_trace(const TraceConfig& config) {
  const BlrSetup s = blr_setup(config.dim, config.n_data, config.sigma2, config.adapt.seed);
  const TargetProblem problem = blr_problem(s.model, s.x_test, s.y_test);
  const auto t1 = MarginalTransport::gaussian(perturbed(s.optimal.q1s, config.proposal_scale, config.proposal_shift));
  const auto t2 = MarginalTransport::gaussian(perturbed(s.optimal.q2s, config.proposal_scale, -config.proposal_shift));
  return sga_optimize(problem, t1, t2, config.adapt);
}

}  // namespace coupled_is
