#include <doctest.h>

#include "fixtures.hpp"
#include "prodfn/kernels.hpp"
#include "prodfn/sensitivity.hpp"

using namespace prodfn;

namespace {

ModelParams interior_params() {
  ModelParams p;
  p.mu_omega = 0.1;
  p.rho_omega = 0.8;
  p.alpha_omega = 0.6;
  return p;
}

// G^T W gbar, the half-gradient of the GMM objective.
Vector6d objective_gradient(const ModelParams& p, const EstimationSample& s, const Eigen::MatrixXd& w) {
  const MomentValues mv = evaluate_moments(p, s, MomentKind::Original, true);
  return moment_jacobian(s, mv.dm).transpose() * w * moment_mean(s, mv.m);
}

// Moves the lagged prediction along e(lambda) = q_{t-1} - lambda (q_{t-1} - e_hat).
EstimationSample along_path(const EstimationSample& s, double lambda) {
  EstimationSample out = s;
  for (std::size_t j = 0; j < s.data.size(); ++j) {
    const RowData& r = s.data[j];
    out.data[j].e_lag = r.q_lag - lambda * (r.q_lag - r.e_lag);
  }
  return out;
}

}  // namespace

TEST_SUITE("sensitivity") {
  TEST_CASE("row Hessians agree with differences of the analytic gradient") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 40, 41, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 3, 2), 2);
    const ModelParams p = interior_params();
    for (std::size_t j = 0; j < s.data.size(); j += 29) {
      const Matrix6d h = moment_hessian_row(p, s.data[j]);
      for (int l = 0; l < kNumParams; ++l) {
        const double step = 1e-6;
        Vector6d up = p.to_vector(), dn = up;
        up(l) += step;
        dn(l) -= step;
        Vector6d gu, gd;
        moment_row(ModelParams::from_vector(up), s.data[j], MomentKind::Original, &gu);
        moment_row(ModelParams::from_vector(dn), s.data[j], MomentKind::Original, &gd);
        const Vector6d fd = (gu - gd) / (2 * step);
        for (int a = 0; a < kNumParams; ++a) CHECK(std::abs(h(a, l) - fd(a)) < 1e-4 * std::max(1.0, std::abs(fd(a))));
      }
      CHECK((h - h.transpose()).norm() < 1e-6 * std::max(1.0, h.norm()));
    }
  }

  TEST_CASE("cross derivative in lambda agrees with a directional difference") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 40, 42, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 2, 2), 2);
    const ModelParams p = interior_params();
    const double h = 1e-6;
    const EstimationSample up = along_path(s, 1.0 + h), dn = along_path(s, 1.0 - h);
    for (std::size_t j = 0; j < s.data.size(); j += 17) {
      Vector6d gu, gd;
      const double mu = moment_row(p, up.data[j], MomentKind::Original, &gu);
      const double md = moment_row(p, dn.data[j], MomentKind::Original, &gd);
      const Vector6d fd = (gu - gd) / (2 * h);
      const Vector6d phi = moment_cross_lambda_row(p, s.data[j]);
      for (int a = 0; a < kNumParams; ++a) CHECK(std::abs(phi(a) - fd(a)) < 1e-5 * std::max(1.0, std::abs(fd(a))));
      const RowData& r = s.data[j];
      const double psi = law_g_prime(r.e_lag - production_f(r.k_lag, r.v_lag, p), p) * r.u();
      CHECK((mu - md) / (2 * h) == doctest::Approx(psi).epsilon(1e-5));
    }
  }

  TEST_CASE("Gamma and gamma are derivatives of the objective gradient") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 300, 43, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 2, 3), 3);
    const ModelParams p = sim.theta0;
    // The estimated W is badly conditioned, so its differences need a wider step than the identity.
    const std::pair<Eigen::MatrixXd, double> weights[] = {
        {Eigen::MatrixXd::Identity(s.h.cols(), s.h.cols()), 1e-6}, {weighting_matrix(p, s).w, 1e-4}};
    for (const auto& [w, step] : weights) {
      CAPTURE(step);
      const double tol = step < 1e-5 ? 1e-6 : 1e-4;
      const Matrix6d big = compute_Gamma(p, s, w);
      for (int l = 0; l < kNumParams; ++l) {
        const double h = step * std::max(1.0, std::abs(p.to_vector()(l)));
        Vector6d up = p.to_vector(), dn = up;
        up(l) += h;
        dn(l) -= h;
        const Vector6d fd = (objective_gradient(ModelParams::from_vector(up), s, w) -
                             objective_gradient(ModelParams::from_vector(dn), s, w)) / (2 * h);
        CHECK((big.col(l) - fd).norm() < tol * std::max(1.0, fd.norm()));
      }
      // Fourth-order central difference along the path.
      const double hl = 10 * step;
      auto at = [&](double d) { return objective_gradient(p, along_path(s, 1.0 + d), w); };
      const Vector6d fd = (8.0 * (at(hl) - at(-hl)) - (at(2 * hl) - at(-2 * hl))) / (12 * hl);
      const Vector6d small = compute_gamma(p, s, w);
      // gamma is small, so with the estimated W rounding leaves a floor near 1e-4 relative.
      CHECK((small - fd).norm() < 3 * tol * std::max(1e-8, fd.norm()));
    }
  }

  TEST_CASE("diagnostic matches re-estimation along the contamination path") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 1000, 44, 200);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 3), 3);
    const Eigen::MatrixXd w = weighting_matrix(sim.theta0, s).w;
    GmmOptions opts;
    opts.grad_tol = 1e-12;
    const GmmResult base = estimate(s, MomentKind::Original, w, sim.theta0, opts);
    REQUIRE(base.converged);
    const SensitivityResult d = diagnostic(base.theta_hat, s, w);
    CHECK(d.reliable);
    CHECK((d.gamma_matrix * d.dtheta_dlambda + d.gamma).norm() < 1e-8 * std::max(1e-12, d.gamma.norm()));
    const double h = 1e-3;
    const GmmResult up = estimate(along_path(s, 1.0 + h), MomentKind::Original, w, base.theta_hat, opts);
    const GmmResult dn = estimate(along_path(s, 1.0 - h), MomentKind::Original, w, base.theta_hat, opts);
    const Vector6d fd = (up.theta_hat.to_vector() - dn.theta_hat.to_vector()) / (2 * h);
    for (int l = 0; l < kNumParams; ++l) {
      CHECK(d.dtheta_dlambda(l) == doctest::Approx(fd(l)).epsilon(0.01).scale(1e-3));
    }
    // At a converged estimate the symmetric part dominates.
    CHECK((d.gamma_matrix - d.gamma_matrix.transpose()).norm() < 1e-3 * d.gamma_matrix.norm());
  }

  TEST_CASE("linear law with spanning OLS: second term of gamma vanishes") {
    const auto sim = testing::simulate(testing::ar1_config(), 300, 45, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 2, 4), 4);
    Eigen::VectorXd psi(s.n());
    for (Eigen::Index j = 0; j < s.n(); ++j) {
      const RowData& r = s.data[static_cast<std::size_t>(j)];
      psi(j) = law_g_prime(r.e_lag - production_f(r.k_lag, r.v_lag, sim.theta0), sim.theta0) * r.u();
    }
    CHECK((kernels::cross_vector(s.h, psi) / static_cast<double>(s.n())).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("zero residuals give zero gamma") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 50, 46, 100);
    EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 2), 2);
    for (auto& r : s.data) r.e_lag = r.q_lag;
    const Eigen::MatrixXd w = weighting_matrix(sim.theta0, s).w;
    CHECK(compute_gamma(sim.theta0, s, w).norm() == 0.0);
  }

  TEST_CASE("diagnostic is invariant to a common rescaling of the instruments") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 200, 47, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 3), 3);
    const Weighting wt = weighting_matrix(sim.theta0, s);
    EstimationSample scaled = s;
    scaled.h *= 3.0;
    const SensitivityResult a = diagnostic(sim.theta0, s, wt.w);
    const SensitivityResult b = diagnostic(sim.theta0, scaled, wt.w / 9.0);
    // Rounding in W is amplified by its condition number.
    const double tol = 1e-15 * std::max(1.0, wt.condition);
    CHECK((a.dtheta_dlambda - b.dtheta_dlambda).norm() < tol * std::max(1.0, a.dtheta_dlambda.norm()));
    // A power-of-two rescaling is exact in floating point.
    EstimationSample doubled = s;
    doubled.h *= 2.0;
    const SensitivityResult c = diagnostic(sim.theta0, doubled, wt.w / 4.0);
    CHECK((a.dtheta_dlambda - c.dtheta_dlambda).norm() == 0.0);
  }

  TEST_CASE("a singular Gamma is flagged") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 50, 48, 100);
    EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 2), 2);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(s.h.cols(), s.h.cols());
    const SensitivityResult r = diagnostic(sim.theta0, s, w);
    CHECK_FALSE(r.reliable);
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.dtheta_dlambda.allFinite());
  }
}
