#pragma once

#include <Eigen/Dense>
#include <vector>

namespace freelunch::stats {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Compensated (Kahan) mean. Rounding error is O(eps), independent of n.
double kahan_mean(const double* x, long n);
inline double kahan_mean(const Vector& x) { return kahan_mean(x.data(), x.size()); }

/// Type-7 quantile (linear interpolation between order statistics).
/// `sorted` must be ascending; p in [0,1].
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Convenience: sorts a copy of the column and interpolates.
double quantile(const Vector& x, double p);

/// Column means of a draw matrix (rows = draws).
Vector col_mean(const Matrix& draws);

/// Sample covariance of rows with divisor `rows` (ddof = 0).
Matrix covariance(const Matrix& draws);

/// Per-column standard deviation, divisor `rows` (ddof = 0).
Vector col_sd(const Matrix& draws);

/// Standard normal density and CDF (erfc-based, accurate in the tails).
double norm_pdf(double x);
double norm_cdf(double x);

/// Inverse standard normal CDF (Wichura AS241, ~1e-15 absolute).
double norm_quantile(double p);

/// Regularized upper incomplete gamma Q(a, x), series/continued-fraction,
/// absolute accuracy ~1e-12.
double gamma_q(double a, double x);

/// Upper-tail probability of a chi-squared with `dof` degrees of freedom.
double chi2_tail(double x, double dof);

}  // namespace freelunch::stats
