#include "prodfn/sensitivity.hpp"

#include <json.hpp>
#include <sstream>

#include "prodfn/kernels.hpp"

namespace prodfn {

Matrix6d moment_hessian_row(const ModelParams& p, const RowData& r) {
  const double w = r.e_lag - production_f(r.k_lag, r.v_lag, p);
  const double gp = law_g_prime(w, p);
  const double gpp = law_g_dprime(w, p);
  const Eigen::Vector3d df_lag = production_dtheta(r.k_lag, r.v_lag, p);
  const LawGradient lg = law_g_dtheta(w, p);
  Matrix6d h;
  h.topLeftCorner<3, 3>() = -production_d2theta(r.k, r.v, p) +
                            gp * production_d2theta(r.k_lag, r.v_lag, p) -
                            gpp * df_lag * df_lag.transpose();
  h.topRightCorner<3, 3>() = df_lag * lg.domega_dtheta.transpose();
  h.bottomLeftCorner<3, 3>() = h.topRightCorner<3, 3>().transpose();
  h.bottomRightCorner<3, 3>() = -law_g_d2theta(w, p);
  return h;
}

Vector6d moment_cross_lambda_row(const ModelParams& p, const RowData& r) {
  const double w = r.e_lag - production_f(r.k_lag, r.v_lag, p);
  const double u = r.u();
  Vector6d out;
  out.head<3>() = -law_g_dprime(w, p) * production_dtheta(r.k_lag, r.v_lag, p) * u;
  out.tail<3>() = law_g_dtheta(w, p).domega_dtheta * u;
  return out;
}

namespace {

struct Pieces {
  Eigen::MatrixXd g;   // (1/n) sum h dm^T
  Eigen::VectorXd hw;  // h_r^T W gbar per row
};

Pieces pieces(const ModelParams& p, const EstimationSample& s, const Eigen::MatrixXd& w) {
  const MomentValues mv = evaluate_moments(p, s, MomentKind::Original, true);
  Pieces out;
  out.g = moment_jacobian(s, mv.dm);
  out.hw = s.h * (w * moment_mean(s, mv.m));
  return out;
}

Matrix6d gamma_matrix(const ModelParams& p, const EstimationSample& s, const Eigen::MatrixXd& w,
                      const Pieces& pc) {
  const Eigen::Index n = s.n();
  Eigen::MatrixXd hess(n, kNumParams * kNumParams);
  std::vector<char> bad(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    try {
      const Matrix6d h = moment_hessian_row(p, s.data[static_cast<std::size_t>(j)]);
      hess.row(j) = Eigen::Map<const Eigen::Matrix<double, 1, kNumParams * kNumParams>>(h.data());
    } catch (const DomainError&) {
      bad[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (bad[static_cast<std::size_t>(j)]) {
      throw DomainError("moment Hessian failed at estimation row " + std::to_string(j));
    }
  }
  const Eigen::VectorXd first = kernels::cross_vector(hess, pc.hw) / static_cast<double>(n);
  Matrix6d out = Eigen::Map<const Matrix6d>(first.data());
  out += pc.g.transpose() * w * pc.g;
  return out;
}

Vector6d gamma_vector(const ModelParams& p, const EstimationSample& s, const Eigen::MatrixXd& w,
                      const Pieces& pc) {
  const Eigen::Index n = s.n();
  Eigen::MatrixXd phi(n, kNumParams);
  Eigen::VectorXd psi(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    const RowData& r = s.data[static_cast<std::size_t>(j)];
    phi.row(j) = moment_cross_lambda_row(p, r).transpose();
    psi(j) = law_g_prime(r.e_lag - production_f(r.k_lag, r.v_lag, p), p) * r.u();
  }
  const double dn = static_cast<double>(n);
  Vector6d out = kernels::cross_vector(phi, pc.hw) / dn;
  out += pc.g.transpose() * w * (kernels::cross_vector(s.h, psi) / dn);
  return out;
}

}  // namespace

Matrix6d compute_Gamma(const ModelParams& theta_hat, const EstimationSample& s,
                       const Eigen::MatrixXd& w) {
  return gamma_matrix(theta_hat, s, w, pieces(theta_hat, s, w));
}

Vector6d compute_gamma(const ModelParams& theta_hat, const EstimationSample& s,
                       const Eigen::MatrixXd& w) {
  return gamma_vector(theta_hat, s, w, pieces(theta_hat, s, w));
}

SensitivityResult diagnostic(const ModelParams& theta_hat, const EstimationSample& s,
                             const Eigen::MatrixXd& w) {
  const Pieces pc = pieces(theta_hat, s, w);
  SensitivityResult out;
  out.gamma_matrix = gamma_matrix(theta_hat, s, w, pc);
  out.gamma = gamma_vector(theta_hat, s, w, pc);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.gamma_matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  out.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                          : std::numeric_limits<double>::infinity();
  if (!(out.condition < 1e12)) {
    out.reliable = false;
    svd.setThreshold(1e-12);
    std::ostringstream os;
    os << "Gamma is numerically singular (condition " << out.condition
       << "); reporting the pseudo-inverse solution";
    out.warnings.push_back(os.str());
    out.dtheta_dlambda = -svd.solve(out.gamma);
  } else {
    out.dtheta_dlambda = -out.gamma_matrix.fullPivLu().solve(out.gamma);
  }
  out.residual = (out.gamma_matrix * out.dtheta_dlambda + out.gamma).norm();
  return out;
}

std::string SensitivityResult::to_json() const {
  nlohmann::ordered_json j;
  for (int i = 0; i < kNumParams; ++i) {
    j["dtheta_dlambda"][kParamNames[i]] = dtheta_dlambda(i);
    j["gamma"][kParamNames[i]] = gamma(i);
  }
  std::vector<std::vector<double>> g(kNumParams, std::vector<double>(kNumParams));
  for (int a = 0; a < kNumParams; ++a)
    for (int b = 0; b < kNumParams; ++b) g[a][b] = gamma_matrix(a, b);
  j["Gamma"] = g;
  j["condition"] = condition;
  j["residual"] = residual;
  j["reliable"] = reliable;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace prodfn
