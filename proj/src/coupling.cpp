#include "coupled_is/coupling.hpp"

#include "coupled_is/special.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coupled_is {

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MatrixXd matrix_from_json(const nlohmann::json& doc, Eigen::Index d, const char* field) {
  if (!doc.is_array() || static_cast<Eigen::Index>(doc.size()) != d) {
    throw std::invalid_argument(std::string("coupling JSON: field '") + field + "' must be a " +
                                std::to_string(d) + "x" + std::to_string(d) + " array");
  }
  MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& row = doc[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
      throw std::invalid_argument(std::string("coupling JSON: row ") + std::to_string(i) + " of '" + field +
                                  "' has wrong length");
    }
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

VectorXd vector_from_json(const nlohmann::json& doc, const char* field) {
  if (!doc.is_array()) throw std::invalid_argument(std::string("coupling JSON: field '") + field + "' must be an array");
  VectorXd v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) v(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  return v;
}

}  // namespace

MatrixXd orthogonal_from_skew(const MatrixXd& a) {
  detail::require_square(a, "orthogonal_from_skew");
  const MatrixXd k = a - a.transpose();
  return k.exp();
}

MatrixXd orthogonal_from_skew_adjoint(const MatrixXd& a, const MatrixXd& grad_q) {
  detail::require_square(a, "orthogonal_from_skew_adjoint");
  const Eigen::Index d = a.rows();
  detail::require_same_dim(grad_q.rows(), d, "orthogonal_from_skew_adjoint");
  const MatrixXd kt = (a - a.transpose()).transpose();
  MatrixXd block = MatrixXd::Zero(2 * d, 2 * d);
  block.topLeftCorner(d, d) = kt;
  block.bottomRightCorner(d, d) = kt;
  block.topRightCorner(d, d) = grad_q;
  const MatrixXd e = block.exp();
  const MatrixXd dk = e.topRightCorner(d, d);
  MatrixXd da = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) da(i, j) = dk(i, j) - dk(j, i);
  }
  return da;
}

GaussianCouplingParams GaussianCouplingParams::diagonal(const VectorXd& v) {
  const Eigen::Index d = v.size();
  return {MatrixXd::Zero(d, d), MatrixXd::Zero(d, d), v};
}

MatrixXd GaussianCouplingParams::s_c() const { return u() * sigma().asDiagonal() * v_mat().transpose(); }

VectorXd GaussianCouplingParams::flatten() const {
  const Eigen::Index d = dim();
  VectorXd theta(flat_size(d));
  Eigen::Index k = 0;
  for (const MatrixXd* a : {&a_u, &a_v}) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) theta(k++) = (*a)(i, j);
    }
  }
  theta.tail(d) = v;
  return theta;
}

GaussianCouplingParams GaussianCouplingParams::unflatten(const VectorXd& theta, Eigen::Index d) {
  detail::require_same_dim(theta.size(), flat_size(d), "GaussianCouplingParams::unflatten");
  GaussianCouplingParams p{MatrixXd::Zero(d, d), MatrixXd::Zero(d, d), theta.tail(d)};
  Eigen::Index k = 0;
  for (MatrixXd* a : {&p.a_u, &p.a_v}) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) (*a)(i, j) = theta(k++);
    }
  }
  return p;
}

std::string to_string(CouplingKind kind) {
  switch (kind) {
    case CouplingKind::kCrn: return "crn";
    case CouplingKind::kAntithetic: return "antithetic";
    case CouplingKind::kIndependent: return "independent";
    case CouplingKind::kSignMask: return "sign_mask";
    case CouplingKind::kGaussian: return "gaussian";
    case CouplingKind::kMixture: return "mixture";
  }
  return "unknown";
}

Coupling Coupling::from_matrices(CouplingKind kind, MatrixXd s, MatrixXd m, bool deterministic) {
  Coupling c;
  c.kind_ = kind;
  c.dim_ = s.rows();
  c.s_c_ = std::move(s);
  c.m_ = std::move(m);
  c.deterministic_ = deterministic;
  return c;
}

Coupling Coupling::crn(Eigen::Index d) {
  const MatrixXd eye = MatrixXd::Identity(d, d);
  return from_matrices(CouplingKind::kCrn, eye, MatrixXd::Zero(d, d), true);
}

Coupling Coupling::antithetic(Eigen::Index d) {
  const MatrixXd eye = MatrixXd::Identity(d, d);
  return from_matrices(CouplingKind::kAntithetic, -eye, MatrixXd::Zero(d, d), true);
}

Coupling Coupling::independent(Eigen::Index d) {
  Coupling c = from_matrices(CouplingKind::kIndependent, MatrixXd::Zero(d, d), MatrixXd::Identity(d, d), false);
  c.cond_chol_ = MatrixXd::Identity(d, d);
  c.cond_log_det_ = 0.0;
  c.has_density_ = true;
  return c;
}

Coupling Coupling::sign_mask(const VectorXd& signs) {
  for (Eigen::Index j = 0; j < signs.size(); ++j) {
    if (signs(j) != 1.0 && signs(j) != -1.0) throw std::invalid_argument("sign_mask: entries must be +1 or -1");
  }
  const Eigen::Index d = signs.size();
  Coupling c = from_matrices(CouplingKind::kSignMask, signs.asDiagonal().toDenseMatrix(), MatrixXd::Zero(d, d), true);
  c.signs_ = signs;
  return c;
}

Coupling Coupling::gaussian(GaussianCouplingParams params) {
  const Eigen::Index d = params.dim();
  if (params.a_u.rows() != d || params.a_u.cols() != d || params.a_v.rows() != d || params.a_v.cols() != d) {
    throw DimensionMismatch("Coupling::gaussian: A_u, A_v must be d x d");
  }
  const MatrixXd u = params.u();
  const VectorXd sigma = params.sigma();
  const VectorXd sech = params.v.array().cosh().inverse().matrix();
  Coupling c = from_matrices(CouplingKind::kGaussian, u * sigma.asDiagonal() * params.v_mat().transpose(),
                             u * sech.asDiagonal(), (sech.array() == 0.0).all());
  // I - S S^T = U diag(sech^2) U^T; M itself serves as the conditional factor.
  if ((sech.array() > 0.0).all()) {
    c.cond_chol_ = c.m_;
    c.cond_log_det_ = 2.0 * sech.array().log().sum();
    c.has_density_ = true;
  }
  c.params_ = std::move(params);
  return c;
}

Coupling Coupling::gaussian(const MatrixXd& s_c) {
  detail::require_square(s_c, "Coupling::gaussian");
  const Eigen::Index d = s_c.rows();
  const MatrixXd cond = MatrixXd::Identity(d, d) - s_c * s_c.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cond + cond.transpose()));
  VectorXd lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -1e-12) {
    throw NotPositiveDefinite("Coupling::gaussian: I - S_c S_c^T is not positive semidefinite (S_c has a singular value > 1)");
  }
  lambda = lambda.cwiseMax(0.0);
  const MatrixXd& q = eig.eigenvectors();
  MatrixXd m = q * lambda.cwiseSqrt().asDiagonal() * q.transpose();
  const bool deterministic = lambda.maxCoeff() <= 1e-12;
  if (deterministic) m.setZero();
  Coupling c = from_matrices(CouplingKind::kGaussian, s_c, std::move(m), deterministic);
  if (lambda.minCoeff() > 1e-12) {
    c.cond_chol_ = c.m_;
    c.cond_log_det_ = lambda.array().log().sum();
    c.has_density_ = true;
  }
  return c;
}

Coupling Coupling::mixture(const VectorXd& weights, std::vector<Coupling> components) {
  if (components.empty() || static_cast<std::size_t>(weights.size()) != components.size()) {
    throw std::invalid_argument("Coupling::mixture: need one weight per component");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("Coupling::mixture: weights must be nonnegative and sum to 1");
  }
  const Eigen::Index d = components.front().dim();
  for (const auto& comp : components) detail::require_same_dim(comp.dim(), d, "Coupling::mixture");
  Coupling c;
  c.kind_ = CouplingKind::kMixture;
  c.dim_ = d;
  c.weights_ = weights;
  c.components_ = std::move(components);
  return c;
}

bool Coupling::absolutely_continuous() const {
  if (kind_ == CouplingKind::kMixture) {
    return std::all_of(components_.begin(), components_.end(),
                       [](const Coupling& c) { return c.absolutely_continuous(); });
  }
  return has_density_;
}

std::vector<Eigen::Index> stratified_counts(const VectorXd& weights, Eigen::Index n) {
  const auto k = static_cast<std::size_t>(weights.size());
  std::vector<Eigen::Index> counts(k);
  std::vector<double> remainder(k);
  Eigen::Index assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = weights(static_cast<Eigen::Index>(i)) * static_cast<double>(n);
    counts[i] = static_cast<Eigen::Index>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % k]];
  return counts;
}

MatrixXd Coupling::second_from_noise(const MatrixXd& z1, const MatrixXd& w) const {
  if (kind_ == CouplingKind::kMixture) throw std::logic_error("second_from_noise: not defined for mixtures");
  switch (kind_) {
    case CouplingKind::kCrn: return z1;
    case CouplingKind::kAntithetic: return -z1;
    case CouplingKind::kSignMask: return z1 * signs_.asDiagonal();
    case CouplingKind::kIndependent: return w;
    default: break;
  }
  if (deterministic_) return z1 * s_c_.transpose();
  return z1 * s_c_.transpose() + w * m_.transpose();
}

SamplePair Coupling::sample_normal(Rng& rng, Eigen::Index n) const {
  if (n < 1) throw std::invalid_argument("Coupling::sample_normal: n must be >= 1");
  if (kind_ != CouplingKind::kMixture) {
    MatrixXd z1 = standard_normal_rows(rng, n, dim_);
    if (deterministic_) return {z1, second_from_noise(z1, MatrixXd())};
    const MatrixXd w = standard_normal_rows(rng, n, dim_);
    MatrixXd z2 = second_from_noise(z1, w);
    return {std::move(z1), std::move(z2)};
  }
  const auto counts = stratified_counts(weights_, n);
  SamplePair out{MatrixXd(n, dim_), MatrixXd(n, dim_)};
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (counts[k] == 0) continue;
    const SamplePair part = components_[k].sample_normal(rng, counts[k]);
    out.first.middleRows(row, counts[k]) = part.first;
    out.second.middleRows(row, counts[k]) = part.second;
    row += counts[k];
  }
  return out;
}

SamplePair Coupling::sample_pair(Rng& rng, Eigen::Index n) const {
  SamplePair z = sample_normal(rng, n);
  auto to_uniform = [](double x) { return std::min(std::max(normal_cdf(x), 1e-15), 1.0 - 1e-15); };
  z.first = z.first.unaryExpr(to_uniform);
  z.second = z.second.unaryExpr(to_uniform);
  return z;
}

double Coupling::log_density_normal(const VectorXd& z1, const VectorXd& z2) const {
  detail::require_same_dim(z1.size(), dim_, "Coupling::log_density");
  detail::require_same_dim(z2.size(), dim_, "Coupling::log_density");
  if (kind_ == CouplingKind::kMixture) {
    std::vector<double> terms;
    terms.reserve(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
      terms.push_back(std::log(weights_(static_cast<Eigen::Index>(k))) + components_[k].log_density_normal(z1, z2));
    }
    return log_sum_exp(terms);
  }
  if (!has_density_) {
    throw std::domain_error("singular coupling has no density (" + to_string(kind_) + ")");
  }
  const VectorXd r = cond_chol_.partialPivLu().solve(z2 - s_c_ * z1);
  return -0.5 * r.squaredNorm() - 0.5 * cond_log_det_ + 0.5 * z2.squaredNorm();
}

double Coupling::log_density(const VectorXd& u1, const VectorXd& u2) const {
  detail::require_same_dim(u1.size(), dim_, "Coupling::log_density");
  detail::require_same_dim(u2.size(), dim_, "Coupling::log_density");
  return log_density_normal(u1.unaryExpr([](double u) { return normal_quantile(u); }),
                            u2.unaryExpr([](double u) { return normal_quantile(u); }));
}

nlohmann::json Coupling::to_json() const {
  nlohmann::json doc;
  doc["variant"] = to_string(kind_);
  doc["d"] = dim_;
  switch (kind_) {
    case CouplingKind::kSignMask:
      doc["signs"] = vector_to_json(signs_);
      break;
    case CouplingKind::kGaussian:
      if (params_) {
        doc["A_u"] = matrix_to_json(params_->a_u);
        doc["A_v"] = matrix_to_json(params_->a_v);
        doc["v"] = vector_to_json(params_->v);
      } else {
        doc["S_c"] = matrix_to_json(s_c_);
      }
      break;
    case CouplingKind::kMixture: {
      doc["weights"] = vector_to_json(weights_);
      nlohmann::json comps = nlohmann::json::array();
      for (const auto& c : components_) comps.push_back(c.to_json());
      doc["components"] = std::move(comps);
      break;
    }
    default:
      break;
  }
  return doc;
}

Coupling Coupling::from_json(const nlohmann::json& doc) {
  if (!doc.contains("variant") || !doc.contains("d")) {
    throw std::invalid_argument("coupling JSON: 'variant' and 'd' are required");
  }
  const std::string variant = doc.at("variant").get<std::string>();
  const auto d = doc.at("d").get<Eigen::Index>();
  if (d < 1) throw std::invalid_argument("coupling JSON: 'd' must be >= 1");
  if (variant == "crn") return crn(d);
  if (variant == "antithetic") return antithetic(d);
  if (variant == "independent") return independent(d);
  if (variant == "sign_mask") return sign_mask(vector_from_json(doc.at("signs"), "signs"));
  if (variant == "gaussian") {
    if (doc.contains("v")) {
      GaussianCouplingParams p{matrix_from_json(doc.at("A_u"), d, "A_u"), matrix_from_json(doc.at("A_v"), d, "A_v"),
                               vector_from_json(doc.at("v"), "v")};
      detail::require_same_dim(p.v.size(), d, "coupling JSON v");
      return gaussian(std::move(p));
    }
    return gaussian(matrix_from_json(doc.at("S_c"), d, "S_c"));
  }
  if (variant == "mixture") {
    std::vector<Coupling> comps;
    for (const auto& c : doc.at("components")) comps.push_back(from_json(c));
    return mixture(vector_from_json(doc.at("weights"), "weights"), std::move(comps));
  }
  throw std::invalid_argument("coupling JSON: unknown variant '" + variant + "'");
}

}  // namespace coupled_is
