#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "prodfn/gmm.hpp"

namespace prodfn {

// d^2 m / d theta d theta^T of the original moment at one row.
Matrix6d moment_hessian_row(const ModelParams& p, const RowData& r);

// d^2 m / d theta d lambda with the lagged prediction error replaced by q_{t-1} - e(x_{t-1}).
Vector6d moment_cross_lambda_row(const ModelParams& p, const RowData& r);

Matrix6d compute_Gamma(const ModelParams& theta_hat, const EstimationSample& s,
                       const Eigen::MatrixXd& w);
Vector6d compute_gamma(const ModelParams& theta_hat, const EstimationSample& s,
                       const Eigen::MatrixXd& w);

struct SensitivityResult {
  Matrix6d gamma_matrix;  // Gamma
  Vector6d gamma;
  Vector6d dtheta_dlambda;  // -Gamma^{-1} gamma
  double condition = 0.0;
  double residual = 0.0;  // |Gamma x + gamma|
  bool reliable = true;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

SensitivityResult diagnostic(const ModelParams& theta_hat, const EstimationSample& s,
                             const Eigen::MatrixXd& w);

}  // namespace prodfn
