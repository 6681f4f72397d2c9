#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prodfn/basis.hpp"
#include "prodfn/dgp.hpp"
#include "prodfn/model.hpp"
#include "prodfn/step1.hpp"

namespace prodfn {

enum class MomentKind { Original, Modified };
const char* moment_kind_name(MomentKind kind);

// Variables of one estimation row (i, t).
struct RowData {
  double q = 0, k = 0, v = 0;              // period t
  double q_lag = 0, k_lag = 0, v_lag = 0;  // period t-1
  double e_lag = 0;                        // first-step prediction at x_{t-1}
  double u() const { return q_lag - e_lag; }
};

// Residual of one row; fills the 6-gradient when `grad` is non-null.
double moment_row(const ModelParams& p, const RowData& r, MomentKind kind, Vector6d* grad = nullptr);

// Instruments z = (k_t, k_{t-1}, v_{t-1}, pV).
std::vector<std::string> instrument_names();

struct EstimationSample {
  EstimationRows rows;
  std::vector<RowData> data;
  BasisSpec instruments;
  Eigen::MatrixXd h;      // n x dim(h)
  Eigen::MatrixXd r_lag;  // step-1 design at x_{t-1}; empty unless the fit is OLS

  Eigen::Index n() const { return static_cast<Eigen::Index>(data.size()); }
  Eigen::VectorXd residual_lag() const;  // q_{t-1} - e(x_{t-1})
};

EstimationSample make_sample(const FirmPanel& panel, const Step1Fit& fit, int instrument_degree = 4);
// Sample with a caller-supplied prediction e(x_{t-1}) per estimation row (e.g. an oracle).
EstimationSample make_sample(const FirmPanel& panel, const Eigen::VectorXd& e_lag,
                             int instrument_degree = 4);

struct MomentValues {
  Eigen::VectorXd m;   // per row
  Eigen::MatrixXd dm;  // per row gradient, n x 6 (empty unless requested)
};
MomentValues evaluate_moments(const ModelParams& p, const EstimationSample& s, MomentKind kind,
                              bool gradient);
MomentValues evaluate_moments_serial(const ModelParams& p, const EstimationSample& s,
                                     MomentKind kind, bool gradient);

// (1/n) sum h m and (1/n) sum h dm^T.
Eigen::VectorXd moment_mean(const EstimationSample& s, const Eigen::VectorXd& m);
Eigen::MatrixXd moment_jacobian(const EstimationSample& s, const Eigen::MatrixXd& dm);
double gmm_objective(const ModelParams& p, const EstimationSample& s, MomentKind kind,
                     const Eigen::MatrixXd& w);

struct Weighting {
  Eigen::MatrixXd w;
  double condition = 0.0;
  bool ridged = false;
  std::vector<std::string> warnings;
};
// Inverse of the centered covariance of h*m(theta), normalized by n-1. Near-singular
// covariances get a ridge of 1e-10 * trace / dim.
Weighting weighting_matrix(const ModelParams& theta, const EstimationSample& s,
                           MomentKind kind = MomentKind::Original);
Weighting identity_weighting(Eigen::Index dim);

// Unconstrained coordinates: logit alpha, log(kMaxRho - rho), log nu, mu_omega,
// logit rho_omega, logit alpha_omega.
Vector6d to_unconstrained(const ModelParams& p);
ModelParams from_unconstrained(const Vector6d& phi);
Vector6d dtheta_dphi(const Vector6d& phi);

struct GmmOptions {
  int max_iterations = 400;
  double grad_tol = 1e-8;
  double objective_tol = 1e-12;
  int restarts = 5;
  double restart_sd = 0.1;
  std::uint64_t seed = 1;
  double boundary_margin = 0.01;  // starting values are pulled this far inside (0,1)
};

struct GmmResult {
  ModelParams theta_hat;
  MomentKind kind = MomentKind::Original;
  double objective = 0.0;
  Eigen::VectorXd gbar;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  int restarts_used = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

GmmResult estimate(const EstimationSample& s, MomentKind kind, const Eigen::MatrixXd& w,
                   const ModelParams& start, const GmmOptions& opts = {});
// Identity-weighted first step, then re-estimation with W evaluated at the first-step estimate.
GmmResult estimate_two_step(const EstimationSample& s, MomentKind kind, const ModelParams& start,
                            const GmmOptions& opts = {});

// Average over all panel rows of p + q - pV - v + log df/dv at theta.
double average_log_markup(const FirmPanel& panel, const ModelParams& p);

}  // namespace prodfn
