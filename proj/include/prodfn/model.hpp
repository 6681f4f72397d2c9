#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace prodfn {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Parameter order used everywhere a 6-vector of parameters appears.
enum ParamIndex : int { kAlpha = 0, kRho, kNu, kMuOmega, kRhoOmega, kAlphaOmega };
inline constexpr int kNumParams = 6;
inline constexpr const char* kParamNames[kNumParams] = {"alpha",    "rho",       "nu",
                                                         "mu_omega", "rho_omega", "alpha_omega"};

// Production function (alpha, rho, nu) and law of motion (mu_omega, rho_omega, alpha_omega).
// The elasticity of substitution 1/(1-rho) is derived, never stored.
struct ModelParams {
  double alpha = 0.3;
  double rho = -1.0;
  double nu = 0.95;
  double mu_omega = 0.0;
  double rho_omega = 0.7;
  double alpha_omega = 0.0;

  static constexpr double kMaxRho = -1e-3;

  Vector6d to_vector() const;
  static ModelParams from_vector(const Vector6d& theta);

  // Throws DomainError when any admissibility constraint is violated.
  void validate() const;
  bool is_valid() const;

  double elasticity_of_substitution() const { return 1.0 / (1.0 - rho); }
};

struct FirmState {
  double omega = 0.0;   // log productivity
  double delta1 = 0.0;  // demand intercept
  double delta2 = 0.0;  // demand-slope shifter; the markup is 1 + exp(delta2)
  double pK = 0.0;      // log price of capital
  double pV = 0.0;      // log price of the variable input
};

// ---- CES production function -------------------------------------------------

// (nu/rho) * log(alpha*exp(rho*k) + (1-alpha)*exp(rho*v)), evaluated by log-sum-exp.
double production_f(double k, double v, const ModelParams& p);

// Output elasticity of the variable input.
double production_dv(double k, double v, const ModelParams& p);
double log_production_dv(double k, double v, const ModelParams& p);

// Gradient with respect to (alpha, rho, nu).
Eigen::Vector3d production_dtheta(double k, double v, const ModelParams& p);

// Hessian with respect to (alpha, rho, nu): central differences of the analytic
// gradient, symmetrized. Throws if the raw asymmetry exceeds 1e-6.
Eigen::Matrix3d production_d2theta(double k, double v, const ModelParams& p);

// ---- Law of motion -----------------------------------------------------------

double law_g(double omega, const ModelParams& p);
double law_g_prime(double omega, const ModelParams& p);
double law_g_dprime(double omega, const ModelParams& p);

struct LawGradient {
  Eigen::Vector3d dtheta;         // dg/d(mu_omega, rho_omega, alpha_omega)
  Eigen::Vector3d domega_dtheta;  // d^2 g / d omega d(mu_omega, rho_omega, alpha_omega)
};
LawGradient law_g_dtheta(double omega, const ModelParams& p);

// d^2 g / d theta_g d theta_g^T. g is bilinear in (rho_omega, alpha_omega) and
// affine in mu_omega, so the only nonzero entry is the rho_omega/alpha_omega cross term.
Eigen::Matrix3d law_g_d2theta(double omega, const ModelParams& p);

// Slope of the law of motion at zero: rho_omega*((1-alpha_omega) + alpha_omega/(2 ln 2)).
double persistence(const ModelParams& p);

// ---- Markup ------------------------------------------------------------------

// p + q - pV - v + log(dfdv): log markup plus the output disturbance.
double log_markup_plus_eps(double p_out, double q, double pV, double v, double dfdv);

// log(1 + exp(delta2)), the log markup implied by short-run profit maximization.
double log_markup_true(double delta2);

// Numerically stable log(1 + exp(x)).
double softplus(double x);

}  // namespace prodfn
