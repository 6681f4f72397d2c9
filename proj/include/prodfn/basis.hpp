#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace prodfn {

class StandardizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Columns of observations addressed by variable name.
struct NamedColumns {
  std::vector<std::string> names;
  Eigen::MatrixXd data;  // rows = observations

  Eigen::Index find(const std::string& name) const;  // -1 when absent
};

// Probabilists' Hermite polynomial He_n(x) by the three-term recurrence.
double hermite_univariate(double x, int n);

// All exponent vectors over d variables with total degree <= degree, in graded
// lexicographic order: by total degree, then lexicographically descending.
std::vector<std::vector<int>> multi_indices(int d, int degree);

std::size_t basis_size(int d, int degree);

struct BasisSpec {
  std::vector<std::string> variable_names;
  int total_degree = 4;
  std::vector<double> mean;  // frozen at the first build
  std::vector<double> sd;

  bool standardized() const { return !mean.empty(); }
  std::size_t columns() const { return basis_size(static_cast<int>(variable_names.size()), total_degree); }
  std::vector<std::string> term_labels() const;
};

// Column j is prod_m He_{a_jm}((x_m - mean_m)/sd_m). Captures the standardization into
// `spec` when it is not yet populated; later calls reuse it.
Eigen::MatrixXd build_design(const NamedColumns& data, BasisSpec& spec);
Eigen::MatrixXd build_design(const NamedColumns& data, const BasisSpec& spec);

}  // namespace prodfn
