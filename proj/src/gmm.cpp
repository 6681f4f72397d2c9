#include "prodfn/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>
#include <sstream>
#include <unsupported/Eigen/NonLinearOptimization>

#include "prodfn/kernels.hpp"
#include "prodfn/linalg.hpp"
#include "prodfn/rng.hpp"

namespace prodfn {

const char* moment_kind_name(MomentKind kind) {
  return kind == MomentKind::Original ? "original" : "modified";
}

double moment_row(const ModelParams& p, const RowData& r, MomentKind kind, Vector6d* grad) {
  const double f = production_f(r.k, r.v, p);
  const double f_lag = production_f(r.k_lag, r.v_lag, p);
  const double w = r.e_lag - f_lag;
  double m = r.q - f - law_g(w, p);
  const double u = r.u();
  const bool modified = kind == MomentKind::Modified;
  const double gp = law_g_prime(w, p);
  if (modified) m -= gp * u;
  if (grad) {
    const Eigen::Vector3d df = production_dtheta(r.k, r.v, p);
    const Eigen::Vector3d df_lag = production_dtheta(r.k_lag, r.v_lag, p);
    const LawGradient lg = law_g_dtheta(w, p);
    Eigen::Vector3d gf = -df + gp * df_lag;
    Eigen::Vector3d gg = -lg.dtheta;
    if (modified) {
      gf += law_g_dprime(w, p) * u * df_lag;
      gg -= lg.domega_dtheta * u;
    }
    grad->head<3>() = gf;
    grad->tail<3>() = gg;
  }
  if (!std::isfinite(m)) throw DomainError("non-finite moment residual");
  return m;
}

std::vector<std::string> instrument_names() { return {"k", "k_lag", "v_lag", "pV"}; }

Eigen::VectorXd EstimationSample::residual_lag() const {
  Eigen::VectorXd u(n());
  for (Eigen::Index j = 0; j < n(); ++j) u(j) = data[static_cast<std::size_t>(j)].u();
  return u;
}

namespace {

EstimationSample base_sample(const FirmPanel& panel, int instrument_degree) {
  EstimationSample s;
  s.rows = estimation_rows(panel);
  const auto n = static_cast<std::size_t>(s.rows.size());
  s.data.resize(n);
  NamedColumns z;
  z.names = instrument_names();
  z.data.resize(static_cast<Eigen::Index>(n), 4);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t c = s.rows.cur[j], l = s.rows.lag[j];
    RowData& d = s.data[j];
    d.q = panel.q[c];
    d.k = panel.k[c];
    d.v = panel.v[c];
    d.q_lag = panel.q[l];
    d.k_lag = panel.k[l];
    d.v_lag = panel.v[l];
    const auto jj = static_cast<Eigen::Index>(j);
    z.data(jj, 0) = d.k;
    z.data(jj, 1) = d.k_lag;
    z.data(jj, 2) = d.v_lag;
    z.data(jj, 3) = panel.pV[static_cast<std::size_t>(s.rows.firm[j])];
  }
  s.instruments.variable_names = z.names;
  s.instruments.total_degree = instrument_degree;
  s.h = build_design(z, s.instruments);
  return s;
}

}  // namespace

EstimationSample make_sample(const FirmPanel& panel, const Step1Fit& fit, int instrument_degree) {
  EstimationSample s = base_sample(panel, instrument_degree);
  const NamedColumns x_lag = make_observables(panel, fit.case_id, s.rows.lag);
  Eigen::VectorXd e;
  if (fit.kind == Step1Kind::Ols) {
    s.r_lag = step1_design(fit, x_lag);
    e = s.r_lag * fit.tau;
  } else {
    e = predict(fit, x_lag);
  }
  for (Eigen::Index j = 0; j < s.n(); ++j) s.data[static_cast<std::size_t>(j)].e_lag = e(j);
  return s;
}

EstimationSample make_sample(const FirmPanel& panel, const Eigen::VectorXd& e_lag,
                             int instrument_degree) {
  EstimationSample s = base_sample(panel, instrument_degree);
  if (e_lag.size() != s.n()) throw std::invalid_argument("prediction length must match estimation rows");
  for (Eigen::Index j = 0; j < s.n(); ++j) s.data[static_cast<std::size_t>(j)].e_lag = e_lag(j);
  return s;
}

namespace {

MomentValues evaluate(const ModelParams& p, const EstimationSample& s, MomentKind kind,
                      bool gradient, bool parallel) {
  const Eigen::Index n = s.n();
  MomentValues out;
  out.m.resize(n);
  if (gradient) out.dm.resize(n, kNumParams);
  std::vector<char> bad(static_cast<std::size_t>(n), 0);
  auto row = [&](Eigen::Index j) {
    try {
      Vector6d g;
      out.m(j) = moment_row(p, s.data[static_cast<std::size_t>(j)], kind, gradient ? &g : nullptr);
      if (gradient) out.dm.row(j) = g.transpose();
    } catch (const DomainError&) {
      bad[static_cast<std::size_t>(j)] = 1;
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < n; ++j) row(j);
  } else {
    for (Eigen::Index j = 0; j < n; ++j) row(j);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (bad[static_cast<std::size_t>(j)]) {
      throw DomainError("non-finite moment at estimation row " + std::to_string(j));
    }
  }
  return out;
}

}  // namespace

MomentValues evaluate_moments(const ModelParams& p, const EstimationSample& s, MomentKind kind,
                              bool gradient) {
  return evaluate(p, s, kind, gradient, true);
}

MomentValues evaluate_moments_serial(const ModelParams& p, const EstimationSample& s,
                                     MomentKind kind, bool gradient) {
  return evaluate(p, s, kind, gradient, false);
}

Eigen::VectorXd moment_mean(const EstimationSample& s, const Eigen::VectorXd& m) {
  return kernels::cross_vector(s.h, m) / static_cast<double>(s.n());
}

Eigen::MatrixXd moment_jacobian(const EstimationSample& s, const Eigen::MatrixXd& dm) {
  return kernels::cross_product(s.h, dm) / static_cast<double>(s.n());
}

double gmm_objective(const ModelParams& p, const EstimationSample& s, MomentKind kind,
                     const Eigen::MatrixXd& w) {
  const Eigen::VectorXd g = moment_mean(s, evaluate_moments(p, s, kind, false).m);
  return g.dot(w * g);
}

Weighting weighting_matrix(const ModelParams& theta, const EstimationSample& s, MomentKind kind) {
  const Eigen::Index n = s.n();
  if (n < 2) throw std::invalid_argument("weighting matrix needs at least two rows");
  const Eigen::VectorXd m = evaluate_moments(theta, s, kind, false).m;
  const Eigen::VectorXd mu = moment_mean(s, m);
  const Eigen::VectorXd m2 = m.array().square().matrix();
  Eigen::MatrixXd cov = kernels::weighted_cross_product(s.h, m2, s.h);
  cov = (cov - static_cast<double>(n) * mu * mu.transpose()) / static_cast<double>(n - 1);
  cov = (0.5 * (cov + cov.transpose())).eval();

  Weighting out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  out.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > 1e-12 * lmax)) {
    const double ridge = 1e-10 * cov.trace() / static_cast<double>(cov.rows());
    cov.diagonal().array() += ridge;
    out.ridged = true;
    std::ostringstream os;
    os << "moment covariance is near-singular (condition " << out.condition
       << "); added ridge " << ridge;
    out.warnings.push_back(os.str());
  }
  out.w = cov.ldlt().solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  out.w = (0.5 * (out.w + out.w.transpose())).eval();
  return out;
}

Weighting identity_weighting(Eigen::Index dim) {
  Weighting out;
  out.w = Eigen::MatrixXd::Identity(dim, dim);
  out.condition = 1.0;
  return out;
}

// ---- Transforms --------------------------------------------------------------

namespace {
// Clamped so that the image stays strictly inside (0,1) in double precision.
double logistic(double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -30.0, 30.0))); }
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

Vector6d to_unconstrained(const ModelParams& p) {
  Vector6d phi;
  phi << logit(p.alpha), std::log(ModelParams::kMaxRho - p.rho), std::log(p.nu), p.mu_omega,
      logit(p.rho_omega), logit(p.alpha_omega);
  return phi;
}

ModelParams from_unconstrained(const Vector6d& phi) {
  ModelParams p;
  p.alpha = logistic(phi(0));
  p.rho = ModelParams::kMaxRho - std::exp(phi(1));
  p.nu = std::exp(phi(2));
  p.mu_omega = phi(3);
  p.rho_omega = logistic(phi(4));
  p.alpha_omega = logistic(phi(5));
  return p;
}

Vector6d dtheta_dphi(const Vector6d& phi) {
  auto dl = [](double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
  };
  Vector6d d;
  d << dl(phi(0)), -std::exp(phi(1)), std::exp(phi(2)), 1.0, dl(phi(4)), dl(phi(5));
  return d;
}

// ---- Optimizer ---------------------------------------------------------------

namespace {

// Whitened moments L^T gbar with W = L L^T, so that the sum of squares is the objective.
struct WhitenedMoments {
  using Scalar = double;
  const EstimationSample* s;
  MomentKind kind;
  Eigen::MatrixXd lt;
  int evaluations = 0;

  int inputs() const { return kNumParams; }
  int values() const { return static_cast<int>(lt.rows()); }

  int operator()(const Eigen::VectorXd& phi, Eigen::VectorXd& fvec) {
    ++evaluations;
    if (!phi.allFinite()) {
      fvec = Eigen::VectorXd::Constant(values(), 1e8);
      return 0;
    }
    try {
      const ModelParams p = from_unconstrained(phi);
      fvec = lt * moment_mean(*s, evaluate_moments(p, *s, kind, false).m);
      if (!fvec.allFinite()) fvec = Eigen::VectorXd::Constant(values(), 1e8);
    } catch (const DomainError&) {
      fvec = Eigen::VectorXd::Constant(values(), 1e8);
    }
    return 0;
  }

  int df(const Eigen::VectorXd& phi, Eigen::MatrixXd& fjac) {
    try {
      const ModelParams p = from_unconstrained(phi);
      const MomentValues mv = evaluate_moments(p, *s, kind, true);
      fjac = lt * moment_jacobian(*s, mv.dm) * dtheta_dphi(phi).asDiagonal();
      if (!fjac.allFinite()) fjac.setZero();
    } catch (const DomainError&) {
      fjac = Eigen::MatrixXd::Zero(values(), kNumParams);
    }
    return 0;
  }
};

struct RunOutcome {
  Vector6d phi;
  double objective = std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

double phi_gradient_norm(WhitenedMoments& f, const Vector6d& phi) {
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  f(phi, r);
  f.df(phi, j);
  return (2.0 * j.transpose() * r).norm();
}

RunOutcome run_lm(WhitenedMoments& f, const Vector6d& start, const GmmOptions& opts) {
  Eigen::LevenbergMarquardt<WhitenedMoments> lm(f);
  lm.parameters.factor = 1.0;
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-13;
  lm.parameters.maxfev = 20 * opts.max_iterations;
  Eigen::VectorXd x = start;
  RunOutcome out;
  Eigen::LevenbergMarquardtSpace::Status st = lm.minimizeInit(x);
  if (st == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
    out.phi = start;
    return out;
  }
  double prev = std::numeric_limits<double>::infinity();
  double last_change = std::numeric_limits<double>::infinity();
  int it = 0;
  do {
    st = lm.minimizeOneStep(x);
    ++it;
    const double obj = lm.fvec.squaredNorm();
    if (std::isfinite(prev)) last_change = std::abs(prev - obj);
    prev = obj;
  } while (st == Eigen::LevenbergMarquardtSpace::Running && it < opts.max_iterations);
  out.phi = x;
  out.iterations = it;
  Eigen::VectorXd r;
  f(x, r);
  out.objective = r.squaredNorm();
  out.grad_norm = phi_gradient_norm(f, x);
  const bool stalled_ok = st != Eigen::LevenbergMarquardtSpace::Running &&
                          st != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation &&
                          st != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                          last_change < opts.objective_tol;
  out.converged = x.allFinite() && out.objective < 1e15 &&
                  (out.grad_norm < opts.grad_tol || stalled_ok);
  return out;
}

Vector6d interior_start(const ModelParams& start, double margin) {
  ModelParams p = start;
  p.alpha = std::clamp(p.alpha, margin, 1.0 - margin);
  p.rho_omega = std::clamp(p.rho_omega, margin, 1.0 - margin);
  p.alpha_omega = std::clamp(p.alpha_omega, margin, 1.0 - margin);
  p.rho = std::min(p.rho, ModelParams::kMaxRho - margin);
  p.nu = std::max(p.nu, margin);
  return to_unconstrained(p);
}

}  // namespace

GmmResult estimate(const EstimationSample& s, MomentKind kind, const Eigen::MatrixXd& w,
                   const ModelParams& start, const GmmOptions& opts) {
  if (w.rows() != s.h.cols() || w.cols() != s.h.cols()) {
    throw std::invalid_argument("weighting matrix dimension does not match the instruments");
  }
  GmmResult res;
  res.kind = kind;
  Eigen::LLT<Eigen::MatrixXd> llt(w);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("weighting matrix is not positive definite");
  WhitenedMoments f{&s, kind, llt.matrixL().transpose(), 0};

  const Vector6d phi0 = interior_start(start, opts.boundary_margin);
  RunOutcome best = run_lm(f, phi0, opts);
  int total_it = best.iterations;
  std::mt19937_64 gen(derive_seed(opts.seed, 0x676d6dULL));
  std::normal_distribution<double> nd(0.0, opts.restart_sd);
  int r = 0;
  while (!best.converged && r < opts.restarts) {
    ++r;
    Vector6d phi = phi0;
    for (int j = 0; j < kNumParams; ++j) phi(j) += nd(gen);
    RunOutcome o = run_lm(f, phi, opts);
    total_it += o.iterations;
    if ((o.converged && !best.converged) ||
        (o.converged == best.converged && o.objective < best.objective)) {
      best = o;
    }
  }
  res.theta_hat = from_unconstrained(best.phi);
  res.objective = best.objective;
  res.converged = best.converged;
  res.grad_norm = best.grad_norm;
  res.iterations = total_it;
  res.restarts_used = r;
  try {
    res.gbar = moment_mean(s, evaluate_moments(res.theta_hat, s, kind, false).m);
  } catch (const DomainError& e) {
    res.converged = false;
    res.warnings.push_back(e.what());
  }
  if (!res.converged) {
    std::ostringstream os;
    os << "GMM did not converge after " << r << " restarts (objective " << res.objective
       << ", gradient norm " << res.grad_norm << ")";
    res.warnings.push_back(os.str());
  }
  return res;
}

GmmResult estimate_two_step(const EstimationSample& s, MomentKind kind, const ModelParams& start,
                            const GmmOptions& opts) {
  GmmResult first = estimate(s, kind, identity_weighting(s.h.cols()).w, start, opts);
  Weighting w = weighting_matrix(first.theta_hat, s, kind);
  GmmResult second = estimate(s, kind, w.w, first.theta_hat, opts);
  for (auto& msg : w.warnings) second.warnings.push_back(msg);
  return second;
}

std::string GmmResult::to_json() const {
  nlohmann::ordered_json j;
  j["moment"] = moment_kind_name(kind);
  const Vector6d t = theta_hat.to_vector();
  for (int i = 0; i < kNumParams; ++i) j["theta_hat"][kParamNames[i]] = t(i);
  j["objective"] = objective;
  j["converged"] = converged;
  j["iterations"] = iterations;
  j["gradient_norm"] = grad_norm;
  j["restarts"] = restarts_used;
  j["persistence"] = persistence(theta_hat);
  j["warnings"] = warnings;
  return j.dump(2);
}

double average_log_markup(const FirmPanel& panel, const ModelParams& p) {
  double sum = 0.0;
  for (int i = 0; i < panel.n_firms; ++i) {
    for (int t = 0; t < panel.n_periods; ++t) {
      const std::size_t r = panel.index(i, t);
      sum += panel.p[r] + panel.q[r] - panel.pV[static_cast<std::size_t>(i)] - panel.v[r] +
             log_production_dv(panel.k[r], panel.v[r], p);
    }
  }
  return sum / static_cast<double>(panel.rows());
}

}  // namespace prodfn
