#include "prodfn/kernels.hpp"

#include <omp.h>

#include <stdexcept>
#include <vector>

namespace prodfn::kernels {

namespace {

Eigen::Index num_blocks(Eigen::Index rows) { return (rows + kBlockRows - 1) / kBlockRows; }

template <class BlockFn>
Eigen::MatrixXd blocked_sum(Eigen::Index rows, Eigen::Index out_rows, Eigen::Index out_cols,
                            BlockFn&& fn) {
  const Eigen::Index nb = num_blocks(rows);
  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index start = b * kBlockRows;
    const Eigen::Index len = std::min(kBlockRows, rows - start);
    partial[static_cast<std::size_t>(b)] = fn(start, len);
  }
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(out_rows, out_cols);
  for (const auto& p : partial) total += p;
  return total;
}

void check_rows(Eigen::Index a, Eigen::Index b) {
  if (a != b) throw std::invalid_argument("row count mismatch in cross product");
}

}  // namespace

Eigen::MatrixXd cross_product(const ConstMatRef& a, const ConstMatRef& b) {
  check_rows(a.rows(), b.rows());
  return blocked_sum(a.rows(), a.cols(), b.cols(), [&](Eigen::Index s, Eigen::Index n) {
    Eigen::MatrixXd out = a.middleRows(s, n).transpose() * b.middleRows(s, n);
    return out;
  });
}

Eigen::MatrixXd gram(const ConstMatRef& a) {
  Eigen::MatrixXd g = blocked_sum(a.rows(), a.cols(), a.cols(), [&](Eigen::Index s, Eigen::Index n) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.cols(), a.cols());
    out.selfadjointView<Eigen::Lower>().rankUpdate(a.middleRows(s, n).transpose());
    return out;
  });
  return g.selfadjointView<Eigen::Lower>();
}

Eigen::VectorXd cross_vector(const ConstMatRef& a, const ConstVecRef& v) {
  check_rows(a.rows(), v.rows());
  return blocked_sum(a.rows(), a.cols(), 1, [&](Eigen::Index s, Eigen::Index n) {
    Eigen::MatrixXd out = a.middleRows(s, n).transpose() * v.segment(s, n);
    return out;
  });
}

Eigen::MatrixXd weighted_cross_product(const ConstMatRef& a, const ConstVecRef& w,
                                       const ConstMatRef& b) {
  check_rows(a.rows(), b.rows());
  check_rows(a.rows(), w.rows());
  return blocked_sum(a.rows(), a.cols(), b.cols(), [&](Eigen::Index s, Eigen::Index n) {
    Eigen::MatrixXd out =
        a.middleRows(s, n).transpose() * (w.segment(s, n).asDiagonal() * b.middleRows(s, n));
    return out;
  });
}

namespace serial {

Eigen::MatrixXd cross_product(const ConstMatRef& a, const ConstMatRef& b) {
  check_rows(a.rows(), b.rows());
  return a.transpose() * b;
}

Eigen::MatrixXd gram(const ConstMatRef& a) { return a.transpose() * a; }

Eigen::VectorXd cross_vector(const ConstMatRef& a, const ConstVecRef& v) {
  check_rows(a.rows(), v.rows());
  return a.transpose() * v;
}

Eigen::MatrixXd weighted_cross_product(const ConstMatRef& a, const ConstVecRef& w,
                                       const ConstMatRef& b) {
  check_rows(a.rows(), b.rows());
  return a.transpose() * (w.asDiagonal() * b);
}

}  // namespace serial

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace prodfn::kernels
