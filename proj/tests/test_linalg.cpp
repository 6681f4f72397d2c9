#include <doctest.h>

#include <random>

#include "prodfn/kernels.hpp"
#include "prodfn/linalg.hpp"

using namespace prodfn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = z(eng);
  }
  return m;
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("parallel kernels agree with the serial references") {
    const Eigen::MatrixXd a = random_matrix(10007, 7, 1);
    const Eigen::MatrixXd b = random_matrix(10007, 4, 2);
    const Eigen::VectorXd w = random_matrix(10007, 1, 3);
    CHECK((kernels::gram(a) - kernels::serial::gram(a)).norm() < 1e-9);
    CHECK((kernels::cross_product(a, b) - kernels::serial::cross_product(a, b)).norm() < 1e-9);
    CHECK((kernels::cross_vector(a, w) - kernels::serial::cross_vector(a, w)).norm() < 1e-9);
    CHECK((kernels::weighted_cross_product(a, w, b) - kernels::serial::weighted_cross_product(a, w, b)).norm() < 1e-9);
    CHECK((kernels::gram(a) - a.transpose() * a).norm() < 1e-9);
  }

  TEST_CASE("parallel kernels are bit-identical across thread counts") {
    const Eigen::MatrixXd a = random_matrix(20011, 9, 4);
    const Eigen::VectorXd w = random_matrix(20011, 1, 5);
    const int saved = kernels::max_threads();
    kernels::set_threads(1);
    const Eigen::MatrixXd g1 = kernels::gram(a);
    const Eigen::VectorXd v1 = kernels::cross_vector(a, w);
    kernels::set_threads(4);
    const Eigen::MatrixXd g4 = kernels::gram(a);
    const Eigen::VectorXd v4 = kernels::cross_vector(a, w);
    kernels::set_threads(saved);
    CHECK(g1 == g4);
    CHECK(v1 == v4);
  }

  TEST_CASE("pseudo-inverse of a full-rank and a singular matrix") {
    const Eigen::MatrixXd x = random_matrix(50, 4, 6);
    const Eigen::MatrixXd s = x.transpose() * x;
    const PseudoInverse full = pseudo_inverse_sym(s);
    CHECK(full.rank == 4);
    CHECK_FALSE(full.truncated);
    CHECK((full.inverse * s - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-10);

    Eigen::MatrixXd y(50, 3);
    y << x.col(0), x.col(1), x.col(0) + x.col(1);
    const Eigen::MatrixXd sing = y.transpose() * y;
    const PseudoInverse pi = pseudo_inverse_sym(sing);
    CHECK(pi.rank == 2);
    CHECK(pi.truncated);
    // Moore-Penrose conditions.
    CHECK((sing * pi.inverse * sing - sing).norm() < 1e-8 * sing.norm());
    CHECK((pi.inverse * sing * pi.inverse - pi.inverse).norm() < 1e-8 * pi.inverse.norm());
  }

  TEST_CASE("least squares agrees with a pivoted QR solve") {
    const Eigen::MatrixXd x = random_matrix(500, 6, 7);
    const Eigen::VectorXd y = random_matrix(500, 1, 8);
    const LeastSquares ls = least_squares(x, y);
    const Eigen::VectorXd qr = x.colPivHouseholderQr().solve(y);
    CHECK((ls.coef - qr).norm() < 1e-10);
    CHECK(ls.rank == 6);
    CHECK(ls.warnings.empty());
    // Residuals are orthogonal to the regressors.
    CHECK((x.transpose() * (y - x * ls.coef)).norm() < 1e-9);
  }

  TEST_CASE("badly scaled columns are handled by column scaling") {
    Eigen::MatrixXd x = random_matrix(400, 3, 9);
    x.col(1) *= 1e6;
    x.col(2) *= 1e-5;
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 1.0, 2e-6, 3e5).finished();
    const Eigen::VectorXd y = x * beta;
    const LeastSquares ls = least_squares(x, y);
    for (int j = 0; j < 3; ++j) CHECK(ls.coef(j) == doctest::Approx(beta(j)).epsilon(1e-9));
  }

  TEST_CASE("rank-deficient designs give the minimum-norm fit with a warning") {
    const Eigen::MatrixXd base = random_matrix(300, 2, 10);
    Eigen::MatrixXd x(300, 3);
    x << base.col(0), base.col(1), base.col(0);
    const Eigen::VectorXd y = base.col(0) * 2.0 + base.col(1);
    const LeastSquares ls = least_squares(x, y);
    CHECK(ls.rank == 2);
    CHECK_FALSE(ls.warnings.empty());
    CHECK(ls.coef(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(ls.coef(2) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK((x * ls.coef - y).norm() < 1e-8);
  }
}
