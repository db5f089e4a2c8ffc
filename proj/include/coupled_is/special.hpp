#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace coupled_is {

/// Standard normal log-density.
inline double normal_log_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Standard normal CDF through erfc; accurate in relative terms in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Standard normal quantile. Throws std::domain_error unless 0 < u < 1.
/// Rational initial guess refined by Halley steps on the CDF (|error| < 1e-12).
double normal_quantile(double u);

/// Regularized incomplete beta I_x(a, b). `xc` must equal 1 - x; passing it
/// separately keeps precision when x is close to one.
double regularized_incomplete_beta(double a, double b, double x, double xc);

double student_t_log_pdf(double x, double dof);
double student_t_cdf(double x, double dof);

/// Student-t quantile by safeguarded Newton iteration on log F (bracketed, 1e-12 tolerance).
double student_t_quantile(double u, double dof);

/// Student-t quantile of Phi(z) evaluated without forming Phi(z) in the upper
/// tail, so that precision is symmetric in z.
double student_t_quantile_of_normal_score(double z, double dof);

/// Phi^{-1}(F_t(x)), the inverse of student_t_quantile_of_normal_score.
double normal_score_of_student_t(double x, double dof);

/// log(sum(exp(values))) with a single max shift; -inf for empty input or all -inf.
double log_sum_exp(std::span<const double> values);

}  // namespace coupled_is
