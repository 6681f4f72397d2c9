#include "prodfn/dgp.hpp"

#include <omp.h>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <unsupported/Eigen/NonLinearOptimization>

#include "prodfn/rng.hpp"

namespace prodfn {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void DgpConfig::validate() const {
  std::ostringstream err;
  if (!(model.alpha > 0.0 && model.alpha < 1.0)) err << "alpha must lie in (0,1); ";
  if (!(model.rho <= ModelParams::kMaxRho)) err << "rho must be <= " << ModelParams::kMaxRho << "; ";
  if (!(model.nu > 0.0)) err << "nu must be > 0; ";
  if (!(alpha_omega >= 0.0 && alpha_omega <= 1.0)) err << "alpha_omega must lie in [0,1]; ";
  if (n_firms < 1) err << "n_firms must be >= 1; ";
  if (n_periods < 2) err << "n_periods must be >= 2; ";
  if (burn_in < 0) err << "burn_in must be >= 0; ";
  if (!(targets.var > 0.0)) err << "var_omega must be > 0; ";
  if (!(targets.corr > 0.0 && targets.corr < 1.0)) err << "corr_omega must lie in (0,1); ";
  for (double v : {demand.var_d1, demand.var_d2, prices.var_pK, prices.var_pV, sigma2_eps}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      err << "variances must be finite and >= 0; ";
      break;
    }
  }
  if (!(model.nu < 1.0)) {
    // The optimum needs nu < 1 + exp(delta2) for every draw of delta2.
    err << "nu must be < 1 so that every demand draw has an interior optimum; ";
  }
  const std::string msg = err.str();
  if (!msg.empty()) throw std::invalid_argument("invalid DGP config: " + msg);
}

std::string DgpConfig::canonical() const {
  std::ostringstream os;
  os << "alpha=" << fmt_double(model.alpha) << ";rho=" << fmt_double(model.rho)
     << ";nu=" << fmt_double(model.nu) << ";mean_omega=" << fmt_double(targets.mean)
     << ";var_omega=" << fmt_double(targets.var) << ";corr_omega=" << fmt_double(targets.corr)
     << ";alpha_omega=" << fmt_double(alpha_omega) << ";mu_d1=" << fmt_double(demand.mu_d1)
     << ";var_d1=" << fmt_double(demand.var_d1) << ";mu_d2=" << fmt_double(demand.mu_d2)
     << ";var_d2=" << fmt_double(demand.var_d2) << ";mu_pK=" << fmt_double(prices.mu_pK)
     << ";var_pK=" << fmt_double(prices.var_pK) << ";mu_pV=" << fmt_double(prices.mu_pV)
     << ";var_pV=" << fmt_double(prices.var_pV) << ";sigma2_eps=" << fmt_double(sigma2_eps)
     << ";n_firms=" << n_firms << ";n_periods=" << n_periods << ";burn_in=" << burn_in
     << ";seed=" << seed;
  return os.str();
}

DgpConfig baseline_config() { return DgpConfig{}; }

DgpConfig modified_config() {
  DgpConfig c;
  c.targets = {-1.25, 4.0, 0.85};
  c.demand.var_d1 = 0.25;
  c.demand.mu_d2 = -2.5425;
  c.demand.var_d2 = 4.0;
  c.prices.var_pK = 4.0;
  return c;
}

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- Calibration -------------------------------------------------------------

MomentTargets chain_moments(const LawCoefficients& law, const std::vector<double>& shocks,
                            int burn_in, double start) {
  ModelParams p;
  p.mu_omega = law.mu_omega;
  p.rho_omega = law.rho_omega;
  p.alpha_omega = law.alpha_omega;
  const double sd = std::sqrt(law.sigma2_omega);
  double w = start;
  const std::size_t n = shocks.size();
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(burn_in), n / 2);
  for (std::size_t j = 0; j < b; ++j) w = law_g(w, p) + sd * shocks[j];
  // Shifted accumulation keeps the variance sums well-conditioned.
  const double shift = w;
  double s1 = 0.0, s2 = 0.0, s11 = 0.0;
  double prev = w - shift;
  double first = 0.0, last = 0.0;
  std::size_t m = 0;
  for (std::size_t j = b; j < n; ++j) {
    w = law_g(w, p) + sd * shocks[j];
    const double x = w - shift;
    if (m == 0) first = x;
    s1 += x;
    s2 += x * x;
    if (m > 0) s11 += prev * x;
    prev = x;
    last = x;
    ++m;
  }
  const double dm = static_cast<double>(m);
  const double mean = s1 / dm;
  const double var = s2 / dm - mean * mean;
  // Lag-1 covariance over the m-1 adjacent pairs.
  const double mean_a = (s1 - last) / (dm - 1.0);
  const double mean_b = (s1 - first) / (dm - 1.0);
  const double cov = s11 / (dm - 1.0) - mean_a * mean_b;
  MomentTargets out;
  out.mean = mean + shift;
  out.var = var;
  out.corr = cov / var;
  return out;
}

namespace {

struct CalibFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const MomentTargets* targets;
  const std::vector<double>* shocks;
  double alpha_omega;
  int burn_in;

  int inputs() const { return 3; }
  int values() const { return 3; }

  LawCoefficients decode(const Eigen::VectorXd& x) const {
    return {x(0), logistic(x(1)), std::exp(x(2)), alpha_omega};
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const LawCoefficients law = decode(x);
    const MomentTargets m = chain_moments(law, *shocks, burn_in, targets->mean);
    r.resize(3);
    r(0) = (m.mean - targets->mean) / std::sqrt(targets->var);
    r(1) = m.var / targets->var - 1.0;
    r(2) = m.corr - targets->corr;
    if (!r.allFinite()) r.setConstant(1e6);
    return 0;
  }
};

LawCoefficients linear_law(const MomentTargets& t) {
  return {t.mean * (1.0 - t.corr), t.corr, t.var * (1.0 - t.corr * t.corr), 0.0};
}

bool run_lm(const MomentTargets& targets, double alpha_omega, const std::vector<double>& shocks,
            const CalibrationOptions& opts, LawCoefficients& law, Eigen::Vector3d& resid) {
  CalibFunctor f{&targets, &shocks, alpha_omega, opts.chain_burn_in};
  Eigen::NumericalDiff<CalibFunctor> nd(f, 1e-7);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<CalibFunctor>> lm(nd);
  lm.parameters.maxfev = opts.max_evals;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-14;
  Eigen::VectorXd x(3);
  x << law.mu_omega, logit(std::clamp(law.rho_omega, 1e-6, 1.0 - 1e-6)), std::log(law.sigma2_omega);
  lm.minimize(x);
  Eigen::VectorXd r;
  f(x, r);
  resid = r;
  law = f.decode(x);
  return r.allFinite() && r.cwiseAbs().maxCoeff() < std::sqrt(opts.tol);
}

}  // namespace

LawCoefficients calibrate_law(const MomentTargets& targets, double alpha_omega,
                              const CalibrationOptions& opts) {
  if (!(targets.var > 0.0) || !(targets.corr > 0.0 && targets.corr < 1.0)) {
    throw std::invalid_argument("calibration targets need var > 0 and corr in (0,1)");
  }
  if (!(alpha_omega >= 0.0 && alpha_omega <= 1.0)) {
    throw std::invalid_argument("alpha_omega must lie in [0,1]");
  }
  if (opts.chain_length < 100000) {
    throw std::invalid_argument("calibration chain must have at least 1e5 draws");
  }
  const LawCoefficients start = linear_law(targets);
  if (alpha_omega == 0.0) return start;

  std::vector<double> shocks(static_cast<std::size_t>(opts.chain_length) +
                             static_cast<std::size_t>(opts.chain_burn_in));
  NormalStream rng(opts.seed, 0x63616c6962ULL);
  for (double& z : shocks) z = rng();

  LawCoefficients law = start;
  law.alpha_omega = alpha_omega;
  Eigen::Vector3d resid;
  if (run_lm(targets, alpha_omega, shocks, opts, law, resid)) return law;

  // Continuation in the nonlinearity weight from the linear solution.
  law = start;
  constexpr int kSteps = 8;
  for (int s = 1; s <= kSteps; ++s) {
    const double a = alpha_omega * s / kSteps;
    law.alpha_omega = a;
    const bool ok = run_lm(targets, a, shocks, opts, law, resid);
    if (s == kSteps && ok) return law;
  }
  std::ostringstream os;
  os << "law-of-motion calibration did not converge; last residuals (" << resid(0) << ", "
     << resid(1) << ", " << resid(2) << ") at mu_omega=" << law.mu_omega
     << " rho_omega=" << law.rho_omega << " sigma2_omega=" << law.sigma2_omega;
  throw CalibrationError(os.str());
}

ModelParams true_params(const DgpConfig& cfg, const LawCoefficients& law) {
  ModelParams p = cfg.model;
  p.mu_omega = law.mu_omega;
  p.rho_omega = law.rho_omega;
  p.alpha_omega = law.alpha_omega;
  return p;
}

// ---- Firm decisions ----------------------------------------------------------

double demand_price(double q_star, const FirmState& s) {
  return (s.delta1 - q_star) / (1.0 + std::exp(-s.delta2));
}

double mrmc_residual(double v, double k, const FirmState& s, const ModelParams& p) {
  const double f = production_f(k, v, p);
  const double e = std::exp(-s.delta2);
  return (s.delta1 + e * (f + s.omega)) / (1.0 + e) - softplus(s.delta2) +
         log_production_dv(k, v, p) - s.pV - v;
}

namespace {

// d residual / dv = nu*s_v/(1+exp(delta2)) + rho*s_k - 1 < 0.
double mrmc_slope(double v, double k, const FirmState& s, const ModelParams& p) {
  const double sv = production_dv(k, v, p) / p.nu;
  return p.nu * sv / (1.0 + std::exp(s.delta2)) + p.rho * (1.0 - sv) - 1.0;
}

void check_interior(const FirmState& s, const ModelParams& p) {
  if (!(p.nu < 1.0 + std::exp(s.delta2))) {
    throw DomainError("no interior optimum: nu >= 1 + exp(delta2)");
  }
}

}  // namespace

double solve_variable_input(double k, const FirmState& s, const ModelParams& p) {
  check_interior(s, p);
  double lo = k, hi = k;
  double r_lo = mrmc_residual(lo, k, s, p);
  double r_hi = r_lo;
  double width = 1.0;
  int doublings = 0;
  while (!(r_lo > 0.0 && r_hi < 0.0)) {
    if (r_lo == 0.0) return lo;
    if (r_hi == 0.0) return hi;
    if (++doublings > 100) {
      std::ostringstream os;
      os << "MR=MC bracket expansion failed: [" << lo << ", " << hi << "] residuals (" << r_lo
         << ", " << r_hi << ")";
      throw SolverError(os.str());
    }
    if (r_lo <= 0.0) {
      lo = k - width;
      r_lo = mrmc_residual(lo, k, s, p);
    }
    if (r_hi >= 0.0) {
      hi = k + width;
      r_hi = mrmc_residual(hi, k, s, p);
    }
    width *= 2.0;
  }
  // Safeguarded Newton: fall back to bisection whenever the step leaves the bracket.
  double v = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double r = mrmc_residual(v, k, s, p);
    if (std::abs(r) < 1e-13) return v;
    if (r > 0.0) {
      lo = v;
    } else {
      hi = v;
    }
    if (hi - lo < 1e-13 * std::max(1.0, std::abs(v))) return v;
    double next = v - r / mrmc_slope(v, k, s, p);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    v = next;
  }
  return v;
}

double capital_next(const FirmState& s, const ModelParams& p) {
  check_interior(s, p);
  const double a = p.alpha;
  const double r = p.rho / (1.0 - p.rho);
  const double e1 = std::exp(s.delta2) + 1.0;
  const double la = std::log(a), l1a = std::log1p(-a);
  const double t1 = la + r * (la - s.pK);
  const double t2 = l1a + r * (l1a - s.pV);
  const double lse = std::max(t1, t2) + std::log1p(std::exp(-std::abs(t1 - t2)));
  const double bracket = std::log(p.nu) + (p.nu / (e1 * p.rho) - 1.0) * lse - std::log(e1) +
                         s.omega / e1 + s.delta1 / (1.0 + std::exp(-s.delta2));
  const double k = (la - s.pK) / (1.0 - p.rho) + e1 / (e1 - p.nu) * bracket;
  if (!std::isfinite(k)) throw DomainError("non-finite capital choice");
  return k;
}

// ---- Panel simulation --------------------------------------------------------

void FirmPanel::resize(int n, int t) {
  n_firms = n;
  n_periods = t;
  const std::size_t nt = rows();
  for (auto* v : {&q, &q_star, &k, &k_next, &v, &p, &omega, &epsilon}) v->assign(nt, 0.0);
  for (auto* v : {&delta1, &delta2, &pK, &pV}) v->assign(static_cast<std::size_t>(n), 0.0);
}

namespace {

void simulate_firm(int i, const DgpConfig& cfg, const LawCoefficients& law, const ModelParams& p,
                   FirmPanel& out) {
  NormalStream rng(cfg.seed, static_cast<std::uint64_t>(i));
  FirmState s;
  s.delta1 = rng(cfg.demand.mu_d1, cfg.demand.var_d1);
  s.delta2 = rng(cfg.demand.mu_d2, cfg.demand.var_d2);
  s.pK = rng(cfg.prices.mu_pK, cfg.prices.var_pK);
  s.pV = rng(cfg.prices.mu_pV, cfg.prices.var_pV);
  const double sd_xi = std::sqrt(law.sigma2_omega);
  const double sd_eps = std::sqrt(cfg.sigma2_eps);

  double w = rng(cfg.targets.mean, cfg.targets.var);
  // Capital carries no state under full depreciation, so the burn-in only moves omega.
  for (int b = 0; b < cfg.burn_in; ++b) w = law_g(w, p) + sd_xi * rng();
  s.omega = w;
  double k = capital_next(s, p);

  const auto ii = static_cast<std::size_t>(i);
  out.delta1[ii] = s.delta1;
  out.delta2[ii] = s.delta2;
  out.pK[ii] = s.pK;
  out.pV[ii] = s.pV;
  for (int t = 0; t < cfg.n_periods; ++t) {
    s.omega = law_g(s.omega, p) + sd_xi * rng();
    double v = 0.0;
    try {
      v = solve_variable_input(k, s, p);
    } catch (const std::exception& e) {
      throw SolverError("period " + std::to_string(t) + ": " + e.what());
    }
    const double q_star = production_f(k, v, p) + s.omega;
    const double eps = sd_eps * rng();
    const std::size_t r = out.index(i, t);
    out.k[r] = k;
    out.v[r] = v;
    out.omega[r] = s.omega;
    out.q_star[r] = q_star;
    out.epsilon[r] = eps;
    out.q[r] = q_star + eps;
    out.p[r] = demand_price(q_star, s);
    k = capital_next(s, p);
    out.k_next[r] = k;
  }
}

FirmPanel simulate(const DgpConfig& cfg, const LawCoefficients& law, bool parallel) {
  cfg.validate();
  const ModelParams p = true_params(cfg, law);
  p.validate();
  FirmPanel out;
  out.resize(cfg.n_firms, cfg.n_periods);
  out.has_latent = true;
  out.config_hash = hash_hex(cfg.canonical());
  out.seed = cfg.seed;

  std::vector<std::string> errors(static_cast<std::size_t>(cfg.n_firms));
  auto run = [&](int i) {
    try {
      simulate_firm(i, cfg, law, p, out);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < cfg.n_firms; ++i) run(i);
  } else {
    for (int i = 0; i < cfg.n_firms; ++i) run(i);
  }
  for (int i = 0; i < cfg.n_firms; ++i) {
    if (!errors[static_cast<std::size_t>(i)].empty()) {
      throw SolverError("firm " + std::to_string(i) + ": " + errors[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

}  // namespace

FirmPanel simulate_panel(const DgpConfig& cfg, const LawCoefficients& law) {
  return simulate(cfg, law, true);
}

FirmPanel simulate_panel_serial(const DgpConfig& cfg, const LawCoefficients& law) {
  return simulate(cfg, law, false);
}

double expected_log_markup(const DemandSpec& d) {
  if (d.var_d2 == 0.0) return softplus(d.mu_d2);
  const double sd = std::sqrt(d.var_d2);
  const double c = boost::math::constants::one_div_root_two_pi<double>();
  auto f = [&](double z) { return softplus(d.mu_d2 + sd * z) * c * std::exp(-0.5 * z * z); };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-14);
}

}  // namespace prodfn
