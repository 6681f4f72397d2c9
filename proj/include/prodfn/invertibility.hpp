#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "prodfn/dgp.hpp"
#include "prodfn/panel_io.hpp"

namespace prodfn {

// Possibly unbalanced long-format panel with named numeric columns.
struct LongPanel {
  std::vector<double> firm;
  std::vector<double> period;
  std::map<std::string, std::vector<double>> columns;

  std::size_t rows() const { return firm.size(); }
};

LongPanel long_panel_from_table(const CsvTable& table,
                                const std::map<std::string, std::string>& map = {});
LongPanel long_panel_from_panel(const FirmPanel& panel);

struct InvertTestOptions {
  std::vector<std::string> x_vars = {"k", "v", "pV"};
  std::string outcome = "q";
  int degree = 3;
};

struct InvertTestResult {
  std::vector<std::string> beta_names;  // retained lagged regressors
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd beta_cov;
  double wald = 0.0;
  double f_stat = 0.0;
  double p_chi2 = 1.0;
  double p_f = 1.0;
  double r_squared = 0.0;
  int n_obs = 0;
  int n_firms = 0;
  int n_regressors = 0;
  std::vector<std::string> dropped_beta;
  int dropped_psi = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

// OLS of y on [x_{t-1}, r(x_t)] over rows whose previous period is observed, with a
// CR0 firm-clustered covariance for the lagged block. Lagged columns lying in the span
// of r(x_t) are dropped with a warning; dependent r(x_t) columns are dropped next.
InvertTestResult test_mean_independence(const LongPanel& panel, const InvertTestOptions& opts);

// (X^T X)^{-1} [sum_g (X_g^T e_g)(X_g^T e_g)^T] (X^T X)^{-1}. `cluster` ids must be
// contiguous per group or not; any labelling works.
Eigen::MatrixXd clustered_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& e,
                                     const std::vector<long>& cluster,
                                     std::vector<std::string>* warnings = nullptr);

}  // namespace prodfn
