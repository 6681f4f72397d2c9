#include "prodfn/model.hpp"

#include <cmath>
#include <sstream>

namespace prodfn {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw DomainError(std::string("non-finite ") + what);
  }
}

// log(exp(a) + exp(b)) without overflow.
double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// Logs of the two CES terms alpha*exp(rho*k) and (1-alpha)*exp(rho*v).
struct CesTerms {
  double log_k_term;
  double log_v_term;
  double share_k;  // alpha*exp(rho*k) / sum
  double share_v;
  double lse;      // log of the sum
};

CesTerms ces_terms(double k, double v, const ModelParams& p) {
  require_finite(k, "capital");
  require_finite(v, "variable input");
  CesTerms c{};
  c.log_k_term = std::log(p.alpha) + p.rho * k;
  c.log_v_term = std::log1p(-p.alpha) + p.rho * v;
  const double d = c.log_k_term - c.log_v_term;
  c.share_v = 1.0 / (1.0 + std::exp(d));
  c.share_k = 1.0 / (1.0 + std::exp(-d));
  c.lse = log_sum_exp(c.log_k_term, c.log_v_term);
  return c;
}

constexpr double kTail = 30.0;

// log(log(1 + exp(x))), with the x -> -inf branch using log(1+e^x) = e^x (1 - e^x/2 + ...).
double log_softplus(double x) {
  if (x < -kTail) {
    return x + std::log1p(-0.5 * std::exp(x));
  }
  return std::log(softplus(x));
}

// d/dx log(softplus(x)) = sigmoid(x) / softplus(x).
double log_softplus_d1(double x) {
  if (x < -kTail) {
    return 1.0 - 0.5 * std::exp(x);
  }
  const double sig = 1.0 / (1.0 + std::exp(-x));
  return sig / softplus(x);
}

// d^2/dx^2 log(softplus(x)).
double log_softplus_d2(double x) {
  if (x < -kTail) {
    return -0.5 * std::exp(x);
  }
  const double sig = 1.0 / (1.0 + std::exp(-x));
  const double csig = 1.0 / (1.0 + std::exp(x));
  const double s = softplus(x);
  return sig * (csig * s - sig) / (s * s);
}

// The nonlinear component L(omega) = log(log(1 + exp(6 omega))) / 6 and its omega-derivatives.
struct LawPieces {
  double level;
  double d1;
  double d2;
};

LawPieces law_pieces(double omega) {
  require_finite(omega, "productivity");
  const double x = 6.0 * omega;
  return {log_softplus(x) / 6.0, log_softplus_d1(x), 6.0 * log_softplus_d2(x)};
}

}  // namespace

double softplus(double x) {
  if (x > kTail) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

Vector6d ModelParams::to_vector() const {
  Vector6d t;
  t << alpha, rho, nu, mu_omega, rho_omega, alpha_omega;
  return t;
}

ModelParams ModelParams::from_vector(const Vector6d& t) {
  return {t(kAlpha), t(kRho), t(kNu), t(kMuOmega), t(kRhoOmega), t(kAlphaOmega)};
}

bool ModelParams::is_valid() const {
  const Vector6d t = to_vector();
  if (!t.allFinite()) return false;
  return alpha > 0.0 && alpha < 1.0 && rho <= kMaxRho && nu > 0.0 && rho_omega > 0.0 &&
         rho_omega < 1.0 && alpha_omega >= 0.0 && alpha_omega <= 1.0;
}

void ModelParams::validate() const {
  if (is_valid()) return;
  std::ostringstream os;
  os << "inadmissible parameters (alpha=" << alpha << ", rho=" << rho << ", nu=" << nu
     << ", mu_omega=" << mu_omega << ", rho_omega=" << rho_omega
     << ", alpha_omega=" << alpha_omega
     << "); need alpha in (0,1), rho <= -1e-3, nu > 0, rho_omega in (0,1), alpha_omega in [0,1]";
  throw DomainError(os.str());
}

double production_f(double k, double v, const ModelParams& p) {
  const CesTerms c = ces_terms(k, v, p);
  return p.nu / p.rho * c.lse;
}

double production_dv(double k, double v, const ModelParams& p) {
  return p.nu * ces_terms(k, v, p).share_v;
}

double log_production_dv(double k, double v, const ModelParams& p) {
  const CesTerms c = ces_terms(k, v, p);
  return std::log(p.nu) - softplus(c.log_k_term - c.log_v_term);
}

Eigen::Vector3d production_dtheta(double k, double v, const ModelParams& p) {
  const CesTerms c = ces_terms(k, v, p);
  const double scale = p.nu / p.rho;
  Eigen::Vector3d g;
  g(0) = scale * (c.share_k / p.alpha - c.share_v / (1.0 - p.alpha));
  g(1) = -scale / p.rho * c.lse + scale * (k * c.share_k + v * c.share_v);
  g(2) = c.lse / p.rho;
  return g;
}

Eigen::Matrix3d production_d2theta(double k, double v, const ModelParams& p) {
  Eigen::Matrix3d h;
  const double base[3] = {p.alpha, p.rho, p.nu};
  for (int j = 0; j < 3; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(base[j]));
    ModelParams up = p, dn = p;
    double* up_field[3] = {&up.alpha, &up.rho, &up.nu};
    double* dn_field[3] = {&dn.alpha, &dn.rho, &dn.nu};
    *up_field[j] += step;
    *dn_field[j] -= step;
    h.col(j) = (production_dtheta(k, v, up) - production_dtheta(k, v, dn)) / (2.0 * step);
  }
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
    throw DomainError("finite-difference CES Hessian is not symmetric");
  }
  return 0.5 * (h + h.transpose());
}

double law_g(double omega, const ModelParams& p) {
  const double lin = (1.0 - p.alpha_omega) * omega;
  const double nonlin = p.alpha_omega == 0.0 ? 0.0 : p.alpha_omega * law_pieces(omega).level;
  return p.mu_omega + p.rho_omega * (lin + nonlin);
}

double law_g_prime(double omega, const ModelParams& p) {
  const LawPieces l = law_pieces(omega);
  return p.rho_omega * ((1.0 - p.alpha_omega) + p.alpha_omega * l.d1);
}

double law_g_dprime(double omega, const ModelParams& p) {
  return p.rho_omega * p.alpha_omega * law_pieces(omega).d2;
}

LawGradient law_g_dtheta(double omega, const ModelParams& p) {
  const LawPieces l = law_pieces(omega);
  LawGradient out;
  out.dtheta << 1.0, (1.0 - p.alpha_omega) * omega + p.alpha_omega * l.level,
      p.rho_omega * (l.level - omega);
  out.domega_dtheta << 0.0, (1.0 - p.alpha_omega) + p.alpha_omega * l.d1,
      p.rho_omega * (l.d1 - 1.0);
  return out;
}

Eigen::Matrix3d law_g_d2theta(double omega, const ModelParams& /*p*/) {
  const LawPieces l = law_pieces(omega);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  h(1, 2) = h(2, 1) = l.level - omega;
  return h;
}

double persistence(const ModelParams& p) {
  return p.rho_omega * ((1.0 - p.alpha_omega) + p.alpha_omega / (2.0 * std::log(2.0)));
}

double log_markup_plus_eps(double p_out, double q, double pV, double v, double dfdv) {
  if (!(dfdv > 0.0)) {
    throw DomainError("output elasticity must be positive");
  }
  return p_out + q - pV - v + std::log(dfdv);
}

double log_markup_true(double delta2) { return softplus(delta2); }

}  // namespace prodfn
