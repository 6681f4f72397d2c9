#include <doctest.h>

#include "fixtures.hpp"
#include "prodfn/step1.hpp"

using namespace prodfn;

TEST_SUITE("step1") {
  TEST_CASE("observable sets per case") {
    CHECK(observable_names(1) == std::vector<std::string>{"k", "v", "pV"});
    CHECK(observable_names(2) == std::vector<std::string>{"k_next", "k", "v", "pV"});
    CHECK(observable_names(3) == std::vector<std::string>{"k_next", "k", "v", "pV", "p"});
    CHECK_THROWS(observable_names(4));
  }

  TEST_CASE("period extraction and estimation rows") {
    const auto sim = testing::simulate(testing::ar1_config(), 30, 3, 50);
    const NamedColumns x = make_observables(sim.panel, 2, 4);
    CHECK(x.data.rows() == 30);
    CHECK(x.data(7, 0) == sim.panel.k_next[sim.panel.index(7, 4)]);
    CHECK_THROWS_AS(make_observables(sim.panel, 2, sim.panel.n_periods), std::out_of_range);
    CHECK_THROWS_AS(make_observables(sim.panel, 2, -1), std::out_of_range);

    const EstimationRows rows = estimation_rows(sim.panel);
    CHECK(rows.size() == 30 * (sim.panel.n_periods - 1));
    CHECK(rows.firm_start.size() == 31);
    for (Eigen::Index j = 0; j < rows.size(); ++j) {
      CHECK(rows.cur[static_cast<std::size_t>(j)] == rows.lag[static_cast<std::size_t>(j)] + 1);
    }
  }

  TEST_CASE("OLS residuals are orthogonal to the basis") {
    const auto sim = testing::simulate(testing::ar1_config(), 400, 4, 100);
    for (int c : {1, 2, 3}) {
      const Step1Fit fit = fit_ols(sim.panel, c, 4);
      const NamedColumns x = make_observables(sim.panel, c, fit.fit_rows);
      const Eigen::MatrixXd r = step1_design(fit, x);
      CHECK(r.cols() == static_cast<Eigen::Index>(fit.basis.columns()));
      const double scale = r.cwiseAbs().maxCoeff() * fit.residuals.cwiseAbs().maxCoeff() * r.rows();
      CHECK((r.transpose() * fit.residuals).cwiseAbs().maxCoeff() < 1e-10 * scale);
      CHECK((predict(fit, x) - fit.fitted).cwiseAbs().maxCoeff() < 1e-10);
      // Lagged orientation fits periods 0..T-2.
      CHECK(fit.fit_rows.size() == static_cast<std::size_t>(400 * (sim.panel.n_periods - 1)));
    }
    const Step1Fit cur = fit_ols(sim.panel, 1, 4, Orientation::Current);
    CHECK(cur.fit_rows.front() == 1);
  }

  TEST_CASE("the planned-output fit is near perfect under invertibility") {
    const auto sim = testing::simulate(testing::invertible_config(), 500, 5, 100);
    const Step1Fit fit = fit_ols(sim.panel, 1, 4);
    Eigen::VectorXd qs(static_cast<Eigen::Index>(fit.fit_rows.size()));
    for (std::size_t j = 0; j < fit.fit_rows.size(); ++j) qs(static_cast<Eigen::Index>(j)) = sim.panel.q_star[fit.fit_rows[j]];
    const Eigen::VectorXd err = qs - fit.fitted;
    const double r2 = 1.0 - err.squaredNorm() / (qs.array() - qs.mean()).square().sum();
    CHECK(r2 > 0.999);
  }

  TEST_CASE("neural-network first step learns and is reproducible") {
    const auto sim = testing::simulate(testing::nonlinear_config(), 200, 6, 100);
    MlpHyper h;
    h.hidden = 32;
    h.max_epochs = 40;
    h.batch_size = 200;
    h.seed = 99;
    const Step1Fit a = fit_mlp(sim.panel, 3, h);
    const Step1Fit b = fit_mlp(sim.panel, 3, h);
    CHECK(a.fitted == b.fitted);
    REQUIRE(a.net);
    const Eigen::VectorXd q = a.fitted + a.residuals;
    const double var = (q.array() - q.mean()).square().mean();
    CHECK(a.residuals.squaredNorm() / static_cast<double>(q.size()) < 0.05 * var);
    CHECK(a.validation_mse > 0.0);
    CHECK(a.epochs > 0);
    h.seed = 100;
    CHECK(fit_mlp(sim.panel, 3, h).fitted != a.fitted);
  }
}
