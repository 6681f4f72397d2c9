#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace prodfn {

struct PseudoInverse {
  Eigen::MatrixXd inverse;
  int rank = 0;
  double condition = 0.0;  // lambda_max / smallest retained lambda
  bool truncated = false;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

// Eigenvalue-thresholded inverse of a symmetric PSD matrix: eigenvalues below
// rel_tol * lambda_max are dropped.
PseudoInverse pseudo_inverse_sym(const Eigen::MatrixXd& s, double rel_tol = 1e-10);

struct LeastSquares {
  Eigen::VectorXd coef;
  int rank = 0;
  double condition = 0.0;  // of the column-scaled design's Gram matrix, from pivoted R
  std::vector<std::string> warnings;
};

// Minimum-norm OLS through a complete orthogonal decomposition of the
// column-scaled design. Columns whose pivoted R diagonal falls below rel_tol
// times the largest are treated as collinear.
LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double rel_tol = 1e-10);

}  // namespace prodfn
