#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace gfc {

inline constexpr double kRidgeFallback = 1e-8;

struct OlsFit {
  Eigen::VectorXd coef;
  double rss = 0;
  bool ridge_used = false;
};

/// Column-centred copy of a data matrix; regressions below assume centred
/// inputs so the intercept drops out.
inline Eigen::MatrixXd centered(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

/// Least squares of column `target` on `predictors` of a centred matrix.
/// Falls back to ridge 1e-8 when the design is rank deficient.
inline OlsFit ols(const Eigen::MatrixXd& xc, std::size_t target, const std::vector<std::size_t>& predictors) {
  const auto n = xc.rows();
  const auto p = static_cast<Eigen::Index>(predictors.size());
  const Eigen::VectorXd y = xc.col(static_cast<Eigen::Index>(target));
  OlsFit fit;
  if (p == 0) {
    fit.coef.resize(0);
    fit.rss = y.squaredNorm();
    return fit;
  }
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index k = 0; k < p; ++k) z.col(k) = xc.col(static_cast<Eigen::Index>(predictors[k]));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() == p && n > p) {
    fit.coef = qr.solve(y);
  } else {
    Eigen::MatrixXd gram = z.transpose() * z;
    gram.diagonal().array() += kRidgeFallback;
    fit.coef = gram.ldlt().solve(z.transpose() * y);
    fit.ridge_used = true;
  }
  fit.rss = (y - z * fit.coef).squaredNorm();
  return fit;
}

struct LassoFit {
  Eigen::VectorXd coef;
  std::size_t sweeps = 0;
  bool converged = false;
};

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// Cyclic coordinate descent for (1/2n)||y - Z b||^2 + lambda ||b||_1 on
/// centred data. Stops when no coefficient moves by more than `tol`.
inline LassoFit lasso(const Eigen::MatrixXd& xc, std::size_t target, const std::vector<std::size_t>& predictors,
                      double lambda, double tol = 1e-6, std::size_t max_sweeps = 10000) {
  const auto n = static_cast<double>(xc.rows());
  const auto p = static_cast<Eigen::Index>(predictors.size());
  LassoFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    fit.converged = true;
    return fit;
  }
  Eigen::MatrixXd z(xc.rows(), p);
  for (Eigen::Index k = 0; k < p; ++k) z.col(k) = xc.col(static_cast<Eigen::Index>(predictors[k]));
  const Eigen::VectorXd y = xc.col(static_cast<Eigen::Index>(target));
  const Eigen::VectorXd col_sq = z.colwise().squaredNorm().transpose() / n;

  Eigen::VectorXd residual = y;
  for (fit.sweeps = 1; fit.sweeps <= max_sweeps; ++fit.sweeps) {
    double max_change = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (col_sq(k) <= 0) continue;
      const double old = fit.coef(k);
      const double rho = z.col(k).dot(residual) / n + col_sq(k) * old;
      const double updated = soft_threshold(rho, lambda) / col_sq(k);
      if (updated != old) {
        residual -= (updated - old) * z.col(k);
        fit.coef(k) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change <= tol) {
      fit.converged = true;
      break;
    }
  }
  if (fit.sweeps > max_sweeps) fit.sweeps = max_sweeps;
  return fit;
}

}  // namespace gfc
