#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "prodfn/basis.hpp"
#include "prodfn/dgp.hpp"
#include "prodfn/mlp.hpp"

namespace prodfn {

// Which observables enter x: 1 = (k, v, pV); 2 = (k_next, k, v, pV); 3 = case 2 plus p.
std::vector<std::string> observable_names(int case_id);

NamedColumns make_observables(const FirmPanel& panel, int case_id,
                              const std::vector<std::size_t>& rows);
// All firms at period t. Throws std::out_of_range when t is not a recorded period.
NamedColumns make_observables(const FirmPanel& panel, int case_id, int t);

// Rows (i, t) with t = 1..T-1 together with their lags, grouped by firm.
struct EstimationRows {
  std::vector<std::size_t> cur;
  std::vector<std::size_t> lag;
  std::vector<int> firm;
  std::vector<Eigen::Index> firm_start;  // n_firms + 1 offsets into cur
  int n_firms = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(cur.size()); }
};
EstimationRows estimation_rows(const FirmPanel& panel);

// Lagged: regress q_{t-1} on r(x_{t-1}) over the estimation rows' lags (periods 0..T-2).
// Current: regress q_t on r(x_t) over periods 1..T-1.
enum class Orientation { Lagged, Current };
enum class Step1Kind { Ols, Mlp };

struct Step1Fit {
  Step1Kind kind = Step1Kind::Ols;
  int case_id = 1;
  Orientation orientation = Orientation::Lagged;
  BasisSpec basis;
  Eigen::VectorXd tau;
  std::vector<std::size_t> fit_rows;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  int rank = 0;
  double condition = 0.0;
  std::vector<std::string> warnings;
  std::shared_ptr<const MlpNetwork> net;
  double validation_mse = 0.0;
  int epochs = 0;

  std::string to_json() const;
};

std::vector<std::size_t> step1_rows(const FirmPanel& panel, Orientation orientation);

Step1Fit fit_ols(const FirmPanel& panel, int case_id, int degree = 4,
                 Orientation orientation = Orientation::Lagged);
Step1Fit fit_ols_on(const FirmPanel& panel, int case_id, const std::vector<std::size_t>& rows,
                    int degree);
Step1Fit fit_mlp(const FirmPanel& panel, int case_id, const MlpHyper& hyper,
                 Orientation orientation = Orientation::Lagged);

Eigen::VectorXd predict(const Step1Fit& fit, const NamedColumns& x);
// r(x) under the fit's frozen standardization (OLS fits only).
Eigen::MatrixXd step1_design(const Step1Fit& fit, const NamedColumns& x);

}  // namespace prodfn
