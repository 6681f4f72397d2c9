#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "prodfn/gmm.hpp"
#include "prodfn/kernels.hpp"

using namespace prodfn;

namespace {

Eigen::VectorXd oracle_e_lag(const FirmPanel& panel) {
  const EstimationRows rows = estimation_rows(panel);
  Eigen::VectorXd e(rows.size());
  for (Eigen::Index j = 0; j < rows.size(); ++j) e(j) = panel.q_star[rows.lag[static_cast<std::size_t>(j)]];
  return e;
}

ModelParams interior_params() {
  ModelParams p;
  p.mu_omega = 0.1;
  p.rho_omega = 0.8;
  p.alpha_omega = 0.6;
  return p;
}

}  // namespace

TEST_SUITE("gmm") {
  TEST_CASE("moment gradients agree with finite differences") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 50, 21, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 3, 3), 3);
    const ModelParams p = interior_params();
    for (MomentKind kind : {MomentKind::Original, MomentKind::Modified}) {
      for (std::size_t j = 0; j < s.data.size(); j += 37) {
        Vector6d g;
        moment_row(p, s.data[j], kind, &g);
        for (int l = 0; l < kNumParams; ++l) {
          const double h = 1e-6;
          Vector6d up = p.to_vector(), dn = up;
          up(l) += h;
          dn(l) -= h;
          const double fd = (moment_row(ModelParams::from_vector(up), s.data[j], kind) -
                             moment_row(ModelParams::from_vector(dn), s.data[j], kind)) / (2 * h);
          CHECK(std::abs(g(l) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }

  TEST_CASE("parallel and serial moment evaluation agree exactly") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 300, 22, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 2, 4), 4);
    const MomentValues a = evaluate_moments(sim.theta0, s, MomentKind::Modified, true);
    const MomentValues b = evaluate_moments_serial(sim.theta0, s, MomentKind::Modified, true);
    CHECK(a.m == b.m);
    CHECK(a.dm == b.dm);
    CHECK(moment_mean(s, a.m).size() == static_cast<Eigen::Index>(basis_size(4, 4)));
  }

  TEST_CASE("parameter transforms round trip with the right Jacobian") {
    const ModelParams p = interior_params();
    const Vector6d phi = to_unconstrained(p);
    CHECK((from_unconstrained(phi).to_vector() - p.to_vector()).norm() < 1e-14);
    const Vector6d d = dtheta_dphi(phi);
    for (int l = 0; l < kNumParams; ++l) {
      const double h = 1e-6;
      Vector6d up = phi, dn = phi;
      up(l) += h;
      dn(l) -= h;
      const double fd = (from_unconstrained(up).to_vector()(l) - from_unconstrained(dn).to_vector()(l)) / (2 * h);
      CHECK(d(l) == doctest::Approx(fd).epsilon(1e-6));
    }
    Vector6d wild;
    wild << 40, 40, -40, 3, -40, 40;
    CHECK(from_unconstrained(wild).is_valid());
  }

  TEST_CASE("weighting matrix is the inverse centered moment covariance") {
    const auto sim = testing::simulate(testing::ar1_config(), 200, 23, 100);
    const EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 4), 2);
    const Weighting w = weighting_matrix(sim.theta0, s);
    const Eigen::VectorXd m = evaluate_moments(sim.theta0, s, MomentKind::Original, false).m;
    Eigen::MatrixXd hm = s.h.array().colwise() * m.array();
    const Eigen::RowVectorXd mean = hm.colwise().mean();
    hm.rowwise() -= mean;
    const Eigen::MatrixXd cov = hm.transpose() * hm / static_cast<double>(s.n() - 1);
    CHECK((w.w * cov - Eigen::MatrixXd::Identity(cov.rows(), cov.cols())).norm() < 1e-8);
    CHECK_FALSE(w.ridged);
    CHECK((w.w - w.w.transpose()).norm() == 0.0);

    EstimationSample dup = s;
    dup.h.col(2) = dup.h.col(1);
    const Weighting r = weighting_matrix(sim.theta0, dup);
    CHECK(r.ridged);
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.w.allFinite());
  }

  TEST_CASE("finite-sample correction vanishes for the linear law with spanning OLS") {
    const auto sim = testing::simulate(testing::ar1_config(), 400, 24, 100);
    const Step1Fit fit = fit_ols(sim.panel, 2, 4);
    const EstimationSample s = make_sample(sim.panel, fit, 4);
    const Eigen::VectorXd u = s.residual_lag();
    const Eigen::VectorXd corr = kernels::cross_vector(s.h, sim.theta0.rho_omega * u) / static_cast<double>(s.n());
    CHECK(corr.cwiseAbs().maxCoeff() < 1e-8);
    const Weighting w = weighting_matrix(sim.theta0, s);
    ModelParams p = sim.theta0;
    p.alpha = 0.33;
    p.rho = -1.2;
    p.nu = 0.94;
    const double a = gmm_objective(p, s, MomentKind::Original, w.w);
    const double b = gmm_objective(p, s, MomentKind::Modified, w.w);
    CHECK(std::abs(a - b) < 1e-8 * std::max(1.0, a));
  }

  TEST_CASE("constant law makes the moment independent of the first step") {
    const auto sim = testing::simulate(testing::ar1_config(), 50, 25, 50);
    EstimationSample s = make_sample(sim.panel, fit_ols(sim.panel, 1, 2), 2);
    ModelParams p = sim.theta0;
    p.rho_omega = 0.0;
    p.alpha_omega = 0.0;
    const Eigen::VectorXd a = evaluate_moments(p, s, MomentKind::Original, false).m;
    for (auto& r : s.data) r.e_lag += 1.0;
    const Eigen::VectorXd b = evaluate_moments(p, s, MomentKind::Original, false).m;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    const RowData& r = s.data[3];
    CHECK(a(3) == doctest::Approx(r.q - production_f(r.k, r.v, p) - p.mu_omega).epsilon(1e-12));
  }

  TEST_CASE("true parameters satisfy the moments under invertibility") {
    const auto sim = testing::simulate(testing::invertible_config(), 2000, 26, 200);
    const EstimationSample s = make_sample(sim.panel, oracle_e_lag(sim.panel), 2);
    const Eigen::VectorXd m = evaluate_moments(sim.theta0, s, MomentKind::Original, false).m;
    const Eigen::VectorXd mean = moment_mean(s, m);
    // Firm-clustered standard error of each component.
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (int i = 0; i < s.rows.n_firms; ++i) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(mean.size());
      for (Eigen::Index j = s.rows.firm_start[i]; j < s.rows.firm_start[i + 1]; ++j) {
        sum += (s.h.row(j).transpose() * m(j)) - mean;
      }
      var += sum.cwiseAbs2();
    }
    const Eigen::VectorXd se = var.cwiseSqrt() / static_cast<double>(s.n());
    for (Eigen::Index l = 0; l < mean.size(); ++l) CHECK(std::abs(mean(l)) < 3 * se(l));
  }

  TEST_CASE("estimation recovers the truth with an oracle first step") {
    const auto sim = testing::simulate(testing::invertible_config(), 2000, 27, 200);
    const EstimationSample s = make_sample(sim.panel, oracle_e_lag(sim.panel), 3);
    const Weighting w = weighting_matrix(sim.theta0, s);
    ModelParams start = sim.theta0;
    start.alpha = 0.4;
    start.rho = -0.7;
    start.nu = 0.9;
    start.rho_omega = 0.6;
    start.alpha_omega = 0.3;
    const GmmResult r = estimate(s, MomentKind::Original, w.w, start);
    CHECK(r.converged);
    CHECK(r.objective <= gmm_objective(sim.theta0, s, MomentKind::Original, w.w) + 1e-12);
    CHECK(r.theta_hat.alpha == doctest::Approx(sim.theta0.alpha).epsilon(0.1));
    CHECK(r.theta_hat.nu == doctest::Approx(sim.theta0.nu).epsilon(0.02));
    CHECK(r.theta_hat.rho_omega == doctest::Approx(sim.theta0.rho_omega).epsilon(0.05));
    const GmmResult again = estimate(s, MomentKind::Original, w.w, start);
    CHECK(again.theta_hat.to_vector() == r.theta_hat.to_vector());
    CHECK_FALSE(r.to_json().empty());

    GmmOptions tight;
    tight.max_iterations = 1;
    tight.restarts = 0;
    const GmmResult cut = estimate(s, MomentKind::Original, w.w, start, tight);
    CHECK_FALSE(cut.converged);
    CHECK_FALSE(cut.warnings.empty());

    const GmmResult two = estimate_two_step(s, MomentKind::Original, start);
    CHECK(two.converged);
    CHECK(two.theta_hat.nu == doctest::Approx(sim.theta0.nu).epsilon(0.02));
  }

  TEST_CASE("average log markup at the truth is the true markup plus the disturbance") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 100, 28, 100);
    const FirmPanel& pn = sim.panel;
    double truth = 0.0, eps = 0.0;
    for (int i = 0; i < pn.n_firms; ++i) {
      for (int t = 0; t < pn.n_periods; ++t) {
        truth += log_markup_true(pn.delta2[i]);
        eps += pn.epsilon[pn.index(i, t)];
      }
    }
    const double n = static_cast<double>(pn.rows());
    CHECK(average_log_markup(pn, sim.theta0) == doctest::Approx((truth + eps) / n).epsilon(1e-10));
  }
}
