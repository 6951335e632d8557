#include "esl/fitting.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

namespace esl {

namespace {

struct Functor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const ResidualFn* fn;
  int n_in;
  int n_out;

  int inputs() const { return n_in; }
  int values() const { return n_out; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    (*fn)(x, r);
    return 0;
  }
};

}  // namespace

LeastSquaresResult least_squares(const ResidualFn& fn, const Eigen::VectorXd& x0,
                                 int n_residuals) {
  Functor f{&fn, static_cast<int>(x0.size()), n_residuals};
  Eigen::NumericalDiff<Functor> diff(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor>> lm(diff);
  lm.parameters.xtol = 1e-14;
  lm.parameters.ftol = 1e-14;
  lm.parameters.maxfev = 4000;

  LeastSquaresResult out;
  out.params = x0;
  const auto status = lm.minimize(out.params);
  Eigen::VectorXd r(n_residuals);
  fn(out.params, r);
  out.cost = 0.5 * r.squaredNorm();
  out.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::XtolTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::FtolTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::GtolTooSmall;
  return out;
}

}  // namespace esl
