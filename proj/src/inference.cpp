#include "prodfn/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "prodfn/kernels.hpp"
#include "prodfn/linalg.hpp"

namespace prodfn {

const char* lm_variant_name(LmVariant v) {
  return v == LmVariant::PluginCorrected ? "plugin_corrected" : "standard";
}

double chi2_upper_tail(double x, int dof) {
  if (dof <= 0) return 1.0;
  if (!(x > 0.0)) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::cdf(boost::math::complement(dist, x));
}

namespace {

// Row i holds sum_t a_it * w_it for firm i.
Eigen::MatrixXd cluster_sums(const EstimationSample& s, const Eigen::MatrixXd& a,
                             const Eigen::VectorXd& w) {
  const int nf = s.rows.n_firms;
  Eigen::MatrixXd out(nf, a.cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nf; ++i) {
    const Eigen::Index b = s.rows.firm_start[static_cast<std::size_t>(i)];
    const Eigen::Index len = s.rows.firm_start[static_cast<std::size_t>(i) + 1] - b;
    out.row(i) = (a.middleRows(b, len).transpose() * w.segment(b, len)).transpose();
  }
  return out;
}

void require_ols(const EstimationSample& s) {
  if (s.r_lag.size() == 0) {
    throw std::invalid_argument("plug-in correction needs an OLS first step (no step-1 design)");
  }
}

// Moments that vanish to rounding relative to the output scale carry no information.
bool moments_vanish(const EstimationSample& s, const Eigen::VectorXd& m) {
  double scale = 1.0;
  for (const RowData& d : s.data) scale = std::max(scale, std::abs(d.q));
  return m.size() == 0 || m.lpNorm<Eigen::Infinity>() <= 1e-12 * scale;
}

LmResult finish(LmVariant variant, const Eigen::VectorXd& b, const Eigen::MatrixXd& sigma,
                double n, bool degenerate = false) {
  LmResult out;
  out.variant = variant;
  out.nominal_dof = static_cast<int>(b.size());
  if (degenerate) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.warnings.push_back("WARNING: moments vanish to rounding error; statistic set to 0 with 0 dof");
    return out;
  }
  const PseudoInverse pi = pseudo_inverse_sym(sigma, 1e-10);
  if (pi.min_eigenvalue < -1e-8 * std::max(1.0, std::abs(pi.max_eigenvalue))) {
    throw std::logic_error("clustered covariance is not positive semidefinite");
  }
  out.dof = pi.rank;
  out.condition = pi.condition;
  if (pi.rank == 0) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.statistic = std::max(0.0, b.dot(pi.inverse * b) / n);
  out.p_value = chi2_upper_tail(out.statistic, out.dof);
  if (pi.truncated) {
    std::ostringstream os;
    os << "WARNING: LM covariance is numerically singular; pseudo-inverse keeps rank " << pi.rank
       << " of " << b.size() << " and the reference distribution uses " << pi.rank << " dof";
    out.warnings.push_back(os.str());
  }
  return out;
}

}  // namespace

OmegaBlocks clustered_omega_blocks(const EstimationSample& s, const Eigen::VectorXd& m) {
  require_ols(s);
  const double n = static_cast<double>(s.n());
  const Eigen::MatrixXd sh = cluster_sums(s, s.h, m);
  const Eigen::MatrixXd sr = cluster_sums(s, s.r_lag, s.residual_lag());
  OmegaBlocks o;
  o.o11 = kernels::gram(sh) / n;
  o.o12 = kernels::cross_product(sh, sr) / n;
  o.o22 = kernels::gram(sr) / n;
  return o;
}

OmegaBlocks clustered_omega_blocks_naive(const EstimationSample& s, const Eigen::VectorXd& m) {
  require_ols(s);
  const Eigen::Index L = s.h.cols(), P = s.r_lag.cols();
  OmegaBlocks o{Eigen::MatrixXd::Zero(L, L), Eigen::MatrixXd::Zero(L, P), Eigen::MatrixXd::Zero(P, P)};
  const Eigen::VectorXd u = s.residual_lag();
  for (int i = 0; i < s.rows.n_firms; ++i) {
    const Eigen::Index b = s.rows.firm_start[static_cast<std::size_t>(i)];
    const Eigen::Index e = s.rows.firm_start[static_cast<std::size_t>(i) + 1];
    for (Eigen::Index t = b; t < e; ++t) {
      for (Eigen::Index t2 = b; t2 < e; ++t2) {
        for (Eigen::Index a = 0; a < L; ++a) {
          for (Eigen::Index c = 0; c < L; ++c) o.o11(a, c) += m(t) * m(t2) * s.h(t, a) * s.h(t2, c);
          for (Eigen::Index c = 0; c < P; ++c) o.o12(a, c) += m(t) * u(t2) * s.h(t, a) * s.r_lag(t2, c);
        }
        for (Eigen::Index a = 0; a < P; ++a) {
          for (Eigen::Index c = 0; c < P; ++c) o.o22(a, c) += u(t) * u(t2) * s.r_lag(t, a) * s.r_lag(t2, c);
        }
      }
    }
  }
  const double n = static_cast<double>(s.n());
  o.o11 /= n;
  o.o12 /= n;
  o.o22 /= n;
  return o;
}

LmResult lm_test_plugin(const ModelParams& theta0, const EstimationSample& s) {
  require_ols(s);
  const double n = static_cast<double>(s.n());
  const Eigen::VectorXd m = evaluate_moments(theta0, s, MomentKind::Original, false).m;
  Eigen::VectorXd gp(s.n());
  for (Eigen::Index j = 0; j < s.n(); ++j) {
    const RowData& d = s.data[static_cast<std::size_t>(j)];
    gp(j) = law_g_prime(d.e_lag - production_f(d.k_lag, d.v_lag, theta0), theta0);
  }
  // Lambda = [I, A] with A = sum h dm/dtau^T (sum r r^T)^{-1}, dm/dtau = -g' r.
  const PseudoInverse rr = pseudo_inverse_sym(kernels::gram(s.r_lag), 1e-12);
  const Eigen::MatrixXd a = -kernels::weighted_cross_product(s.h, gp, s.r_lag) * rr.inverse;
  const Eigen::MatrixXd sh = cluster_sums(s, s.h, m);
  const Eigen::MatrixXd sr = cluster_sums(s, s.r_lag, s.residual_lag());
  // Lambda Omega Lambda^T assembled as a Gram form of the corrected firm scores.
  const Eigen::MatrixXd scores = sh + sr * a.transpose();
  const Eigen::MatrixXd sigma = kernels::gram(scores) / n;
  const Eigen::VectorXd b = sh.colwise().sum().transpose();
  LmResult out = finish(LmVariant::PluginCorrected, b, sigma, n);
  if (rr.truncated) out.warnings.push_back("step-1 Gram matrix is rank deficient; used its pseudo-inverse");
  return out;
}

LmResult lm_test_standard(const ModelParams& theta0, const EstimationSample& s, MomentKind kind) {
  const double n = static_cast<double>(s.n());
  const Eigen::VectorXd m = evaluate_moments(theta0, s, kind, false).m;
  const Eigen::MatrixXd sh = cluster_sums(s, s.h, m);
  const Eigen::VectorXd b = sh.colwise().sum().transpose();
  return finish(LmVariant::Standard, b, kernels::gram(sh) / n, n, moments_vanish(s, m));
}

std::string LmResult::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = lm_variant_name(variant);
  j["statistic"] = statistic;
  j["dof"] = dof;
  j["nominal_dof"] = nominal_dof;
  j["p_value"] = p_value;
  j["condition"] = condition;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace prodfn
