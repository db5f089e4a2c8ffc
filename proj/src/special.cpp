#include "coupled_is/special.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace coupled_is {
namespace {

// Acklam's rational approximation of the lower-tail normal quantile
// (relative error below 1.2e-9), used only as a starting point.
double normal_quantile_guess(double u) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                          1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                          6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                          -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                          3.754408661907416e+00};
  if (u < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(u));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = u - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

void require_open_unit(double u, const char* what) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::domain_error(std::string(what) + ": probability " + std::to_string(u) +
                            " outside (0,1), quantile is infinite");
  }
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

// Lower tail F(t) for t <= 0.
double student_t_lower_tail(double t, double dof) {
  const double t2 = t * t;
  const double x = dof / (dof + t2);
  const double xc = t2 / (dof + t2);
  return 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x, xc);
}

// Solves F(t) = u for t <= 0 with u <= 0.5.
double student_t_lower_quantile(double u, double dof) {
  if (u == 0.5) return 0.0;
  const double log_u = std::log(u);
  // Tail asymptote F(t) ~ K |t|^-dof / dof gives a starting point far out.
  const double log_k = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                       0.5 * std::log(dof * std::numbers::pi) + 0.5 * (dof + 1.0) * std::log(dof);
  double t = (u < 0.05) ? -std::exp((log_k - std::log(dof) - log_u) / dof)
                        : normal_quantile_guess(u);
  double hi = 0.0;
  double lo = std::min(-1.0, 2.0 * t);
  while (student_t_lower_tail(lo, dof) > u) {
    hi = lo;
    lo *= 2.0;
  }
  if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double cdf = student_t_lower_tail(t, dof);
    const double g = std::log(cdf) - log_u;
    if (g > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    const double slope = std::exp(student_t_log_pdf(t, dof) - std::log(cdf));
    double next = t - g / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - t);
    t = next;
    if (step <= 1e-13 * std::max(1.0, std::abs(t)) || hi - lo <= 1e-14 * std::max(1.0, std::abs(t))) {
      break;
    }
  }
  return t;
}

}  // namespace

double normal_quantile(double u) {
  require_open_unit(u, "normal_quantile");
  if (u > 0.5) return -normal_quantile(1.0 - u);  // 1 - u is exact for u in [0.5, 1]
  double x = normal_quantile_guess(u);
  for (int it = 0; it < 3; ++it) {
    const double err = normal_cdf(x) - u;
    const double step = err / std::exp(normal_log_pdf(x));
    x -= step / (1.0 + 0.5 * x * step);
    if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

double regularized_incomplete_beta(double a, double b, double x, double xc) {
  if (x <= 0.0) return 0.0;
  if (xc <= 0.0) return 1.0;
  const double log_front =
      a * std::log(x) + b * std::log(xc) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, xc) / b;
}

double student_t_log_pdf(double x, double dof) {
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * std::numbers::pi) - 0.5 * (dof + 1.0) * std::log1p(x * x / dof);
}

double student_t_cdf(double x, double dof) {
  if (x <= 0.0) return student_t_lower_tail(x, dof);
  return 1.0 - student_t_lower_tail(-x, dof);
}

double student_t_quantile(double u, double dof) {
  require_open_unit(u, "student_t_quantile");
  if (u > 0.5) return -student_t_lower_quantile(1.0 - u, dof);
  return student_t_lower_quantile(u, dof);
}

double student_t_quantile_of_normal_score(double z, double dof) {
  if (!std::isfinite(z)) throw std::domain_error("student_t_quantile_of_normal_score: non-finite score");
  if (z > 0.0) return -student_t_lower_quantile(normal_cdf(-z), dof);
  return student_t_lower_quantile(normal_cdf(z), dof);
}

double normal_score_of_student_t(double x, double dof) {
  if (!std::isfinite(x)) throw std::domain_error("normal_score_of_student_t: non-finite input");
  if (x > 0.0) return -normal_quantile(student_t_lower_tail(-x, dof));
  if (x == 0.0) return 0.0;
  return normal_quantile(student_t_lower_tail(x, dof));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace coupled_is
