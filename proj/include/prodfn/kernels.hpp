#pragma once

#include <Eigen/Dense>

// Data-parallel reductions over observation rows.
//
// The OpenMP versions split rows into fixed blocks of kBlockRows, reduce each block
// independently and add the block partials in block order, so their output is
// bit-identical for every thread count. The serial namespace holds the plain
// reference implementations used by tests and the benchmark.
namespace prodfn::kernels {

inline constexpr Eigen::Index kBlockRows = 2048;

using ConstMatRef = Eigen::Ref<const Eigen::MatrixXd>;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;

// a^T b
Eigen::MatrixXd cross_product(const ConstMatRef& a, const ConstMatRef& b);
// a^T a
Eigen::MatrixXd gram(const ConstMatRef& a);
// a^T v
Eigen::VectorXd cross_vector(const ConstMatRef& a, const ConstVecRef& v);
// a^T diag(w) b
Eigen::MatrixXd weighted_cross_product(const ConstMatRef& a, const ConstVecRef& w,
                                       const ConstMatRef& b);

namespace serial {
Eigen::MatrixXd cross_product(const ConstMatRef& a, const ConstMatRef& b);
Eigen::MatrixXd gram(const ConstMatRef& a);
Eigen::VectorXd cross_vector(const ConstMatRef& a, const ConstVecRef& v);
Eigen::MatrixXd weighted_cross_product(const ConstMatRef& a, const ConstVecRef& w,
                                       const ConstMatRef& b);
}  // namespace serial

int max_threads();
void set_threads(int n);

}  // namespace prodfn::kernels
