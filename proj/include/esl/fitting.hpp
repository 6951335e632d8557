#pragma once

#include <Eigen/Core>

#include <functional>

namespace esl {

using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

struct LeastSquaresResult {
  Eigen::VectorXd params;
  double cost = 0.0;  // ½ Σ r²
  bool converged = false;
};

/// Levenberg–Marquardt with forward-difference Jacobian.
LeastSquaresResult least_squares(const ResidualFn& fn, const Eigen::VectorXd& x0,
                                 int n_residuals);

}  // namespace esl
