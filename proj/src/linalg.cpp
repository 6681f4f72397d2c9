#include "prodfn/linalg.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>


namespace prodfn {

PseudoInverse pseudo_inverse_sym(const Eigen::MatrixXd& s, double rel_tol) {
  PseudoInverse out;
  const Eigen::Index n = s.rows();
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double lmax = lam.cwiseAbs().maxCoeff();
  out.min_eigenvalue = lam.minCoeff();
  out.max_eigenvalue = lam.maxCoeff();
  out.inverse = Eigen::MatrixXd::Zero(n, n);
  if (!(lmax > 0.0)) {
    out.truncated = true;
    return out;
  }
  const double cut = rel_tol * lmax;
  double lmin_kept = lmax;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lam(j) > cut) {
      inv(j) = 1.0 / lam(j);
      ++out.rank;
      lmin_kept = std::min(lmin_kept, lam(j));
    }
  }
  out.inverse = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  out.condition = lmax / lmin_kept;
  out.truncated = out.rank < n;
  return out;
}

LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double rel_tol) {
  LeastSquares out;
  const Eigen::Index p = x.cols();
  if (x.rows() != y.rows()) throw std::invalid_argument("least_squares: row mismatch");
  out.coef = Eigen::VectorXd::Zero(p);
  if (p == 0) return out;
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double d = x.col(j).norm();
    scale(j) = d > 0.0 ? 1.0 / d : 0.0;
  }
  const Eigen::MatrixXd xs = x * scale.asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(rel_tol);
  cod.compute(xs);
  out.rank = static_cast<int>(cod.rank());
  const Eigen::VectorXd r = cod.matrixQTZ().diagonal().cwiseAbs();
  if (out.rank > 0 && r(0) > 0.0) {
    const double ratio = r(0) / r(out.rank - 1);
    out.condition = ratio * ratio;
  }
  if (out.rank < p) {
    std::ostringstream os;
    os << "design is rank deficient (rank " << out.rank << " of " << p
       << "); using the minimum-norm solution";
    out.warnings.push_back(os.str());
  } else if (out.condition > 1e14) {
    std::ostringstream os;
    os << "design is ill-conditioned (scaled Gram condition number " << out.condition << ")";
    out.warnings.push_back(os.str());
  }
  if (out.rank > 0) out.coef = scale.cwiseProduct(cod.solve(y));
  return out;
}

}  // namespace prodfn
