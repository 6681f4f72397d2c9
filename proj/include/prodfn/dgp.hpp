#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prodfn/model.hpp"

namespace prodfn {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MomentTargets {
  double mean = 0.0;
  double var = 0.25;
  double corr = 0.7;
};

struct DemandSpec {
  double mu_d1 = 10.0;
  double var_d1 = 25.0;
  double mu_d2 = -1.3543;
  double var_d2 = 0.25;
};

struct PriceSpec {
  double mu_pK = 0.0;
  double var_pK = 0.25;
  double mu_pV = 0.0;
  double var_pV = 0.25;
};

struct DgpConfig {
  ModelParams model;  // only alpha, rho, nu are read; the law comes from calibration
  MomentTargets targets;
  double alpha_omega = 0.0;
  DemandSpec demand;
  PriceSpec prices;
  double sigma2_eps = 0.01;
  int n_firms = 2000;
  int n_periods = 20;
  int burn_in = 2000;
  std::uint64_t seed = 1;

  void validate() const;
  // Canonical text form; hashing it identifies the configuration.
  std::string canonical() const;
};

DgpConfig baseline_config();
// Larger productivity dispersion and persistence, more dispersed markups.
DgpConfig modified_config();

struct LawCoefficients {
  double mu_omega = 0.0;
  double rho_omega = 0.7;
  double sigma2_omega = 0.1275;
  double alpha_omega = 0.0;
};

struct CalibrationOptions {
  int chain_length = 1000000;
  int chain_burn_in = 2000;
  std::uint64_t seed = 20240917;
  double tol = 1e-10;
  int max_evals = 400;
};

// Stationary mean, variance and lag-1 autocorrelation of omega' = g(omega) + xi,
// computed on a chain driven by the fixed innovations in `shocks` (standard normals).
MomentTargets chain_moments(const LawCoefficients& law, const std::vector<double>& shocks,
                            int burn_in, double start);

// Solves for (mu_omega, rho_omega, sigma2_omega) so that the stationary chain matches
// the targets. Closed form for the linear law; otherwise Levenberg-Marquardt on a
// common-random-numbers chain.
LawCoefficients calibrate_law(const MomentTargets& targets, double alpha_omega,
                              const CalibrationOptions& opts = {});

ModelParams true_params(const DgpConfig& cfg, const LawCoefficients& law);

// Residual of the marginal-revenue = marginal-cost condition; strictly decreasing in v.
double mrmc_residual(double v, double k, const FirmState& s, const ModelParams& p);
double solve_variable_input(double k, const FirmState& s, const ModelParams& p);
double capital_next(const FirmState& s, const ModelParams& p);
// Output price implied by demand at planned output q_star.
double demand_price(double q_star, const FirmState& s);

// Balanced N x T panel, row index i*T + t. k_next[i*T+t] is k in period t+1.
struct FirmPanel {
  int n_firms = 0;
  int n_periods = 0;
  std::vector<double> q, q_star, k, k_next, v, p, omega, epsilon;
  std::vector<double> delta1, delta2, pK, pV;  // per firm
  bool has_latent = false;
  std::string config_hash;
  std::uint64_t seed = 0;

  std::size_t index(int i, int t) const { return static_cast<std::size_t>(i) * n_periods + t; }
  std::size_t rows() const { return static_cast<std::size_t>(n_firms) * n_periods; }
  void resize(int n, int t);
};

FirmPanel simulate_panel(const DgpConfig& cfg, const LawCoefficients& law);
FirmPanel simulate_panel_serial(const DgpConfig& cfg, const LawCoefficients& law);

// E[log(1 + exp(delta2))] for delta2 ~ N(mu_d2, var_d2), by adaptive quadrature.
double expected_log_markup(const DemandSpec& d);

std::string hash_hex(const std::string& text);

}  // namespace prodfn
