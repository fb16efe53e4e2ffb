#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace hic {

struct LmOptions {
  int max_iterations = 100;
  // Stop when ||step|| <= tol * (||params|| + tol).
  double convergence_tol = 1e-10;
  double initial_lambda = 1e-3;
  double max_lambda = 1e12;
  bool record_history = false;
};

enum class LmStatus { Converged, MaxIterations, Diverged, InvalidStart };

template <int N>
struct LmResult {
  Eigen::Matrix<double, N, 1> params;
  double cost = 0.0;  // 0.5 * sum of squared residuals
  int iterations = 0;
  LmStatus status = LmStatus::InvalidStart;
  std::vector<double> cost_history;  // cost after every accepted step, first entry is the start
};

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling).
///
/// `Model` provides
///   bool evaluate(const Eigen::Matrix<double, N, 1>& p, Eigen::VectorXd& r,
///                 Eigen::Matrix<double, Eigen::Dynamic, N>* jacobian) const;
/// returning false when `p` lies outside the model domain. A step is only
/// accepted when it does not increase the cost, so the accepted cost sequence
/// is non-increasing.
template <int N, class Model>
LmResult<N> levenberg_marquardt(const Model& model, const Eigen::Matrix<double, N, 1>& start,
                                const LmOptions& options = {}) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;
  using Jac = Eigen::Matrix<double, Eigen::Dynamic, N>;

  LmResult<N> result;
  result.params = start;
  Eigen::VectorXd r;
  Eigen::VectorXd r_trial;
  Jac jac;
  if (!model.evaluate(start, r, &jac) || !r.allFinite() || !jac.allFinite()) return result;

  double cost = 0.5 * r.squaredNorm();
  double lambda = options.initial_lambda;
  if (options.record_history) result.cost_history.push_back(cost);
  result.status = LmStatus::MaxIterations;

  Vec p = start;
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    const Mat jtj = jac.transpose() * jac;
    const Vec grad = jac.transpose() * r;
    if (grad.squaredNorm() == 0.0) {
      result.status = LmStatus::Converged;
      break;
    }

    bool accepted = false;
    bool converged = false;
    while (lambda <= options.max_lambda) {
      Mat damped = jtj;
      for (int i = 0; i < N; ++i) damped(i, i) += lambda * std::max(jtj(i, i), 1e-12);
      const Vec step = damped.ldlt().solve(-grad);
      const bool tiny = step.norm() <= options.convergence_tol * (p.norm() + options.convergence_tol);
      const Vec trial = p + step;
      if (step.allFinite() && model.evaluate(trial, r_trial, nullptr) && r_trial.allFinite()) {
        const double trial_cost = 0.5 * r_trial.squaredNorm();
        if (trial_cost <= cost) {
          p = trial;
          cost = trial_cost;
          lambda = std::max(lambda * 0.1, 1e-15);
          model.evaluate(p, r, &jac);
          if (options.record_history) result.cost_history.push_back(cost);
          accepted = true;
          converged = tiny;
          break;
        }
      }
      if (tiny) {
        converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (converged) {
      result.status = LmStatus::Converged;
      break;
    }
    if (!accepted) {
      result.status = LmStatus::Diverged;
      break;
    }
  }
  result.params = p;
  result.cost = cost;
  return result;
}

}  // namespace hic
