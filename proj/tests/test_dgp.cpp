#include <doctest.h>

#include <random>

#include "prodfn/basis.hpp"
#include "prodfn/dgp.hpp"
#include "prodfn/linalg.hpp"
#include "prodfn/rng.hpp"

using namespace prodfn;

namespace {

double log_profit_revenue(double k, double v, const FirmState& s, const ModelParams& p) {
  const double qs = production_f(k, v, p) + s.omega;
  return demand_price(qs, s) + qs;
}

// Short-run profit exp(p + q*) - exp(pV + v), scaled by exp(-scale) to keep it O(1).
double short_run_profit(double k, double v, const FirmState& s, const ModelParams& p, double scale) {
  return std::exp(log_profit_revenue(k, v, s, p) - scale) - std::exp(s.pV + v - scale);
}

template <class F>
double golden_max(F f, double lo, double hi, double tol) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

FirmState random_state(std::mt19937_64& eng) {
  std::normal_distribution<double> z;
  FirmState s;
  s.omega = 0.5 * z(eng);
  s.delta1 = 10.0 + 5.0 * z(eng);
  s.delta2 = -1.3543 + 0.5 * z(eng);
  s.pK = 0.5 * z(eng);
  s.pV = 0.5 * z(eng);
  return s;
}

ModelParams truth() {
  ModelParams p;
  p.rho_omega = 0.7;
  return p;
}

}  // namespace

TEST_SUITE("dgp") {
  TEST_CASE("variable input solves MR = MC and maximizes short-run profit") {
    const ModelParams p = truth();
    std::mt19937_64 eng(11);
    std::normal_distribution<double> z;
    for (int i = 0; i < 20; ++i) {
      const FirmState s = random_state(eng);
      const double k = 2.0 * z(eng) + 3.0;
      const double v = solve_variable_input(k, s, p);
      CHECK(std::abs(mrmc_residual(v, k, s, p)) < 1e-10);
      // Grid with 1e-4 spacing around the solution's neighbourhood, then golden-section refinement.
      const double scale = log_profit_revenue(k, v, s, p);
      double best = -1e300, arg = 0.0;
      for (double x = v - 3.0; x <= v + 3.0; x += 1e-4) {
        const double pr = short_run_profit(k, x, s, p, scale);
        if (pr > best) {
          best = pr;
          arg = x;
        }
      }
      const double refined = golden_max([&](double x) { return short_run_profit(k, x, s, p, scale); },
                                        arg - 1e-4, arg + 1e-4, 1e-9);
      CHECK(std::abs(refined - v) < 1e-3);
    }
  }

  TEST_CASE("variable input increases with productivity") {
    const ModelParams p = truth();
    FirmState s;
    s.delta1 = 10.0;
    s.delta2 = -1.3543;
    double prev = -1e300;
    for (double w = -3.0; w <= 3.0; w += 0.25) {
      s.omega = w;
      const double v = solve_variable_input(1.0, s, p);
      CHECK(v > prev);
      prev = v;
    }
  }

  TEST_CASE("closed-form capital matches a two-dimensional profit maximization") {
    const ModelParams p = truth();
    std::mt19937_64 eng(13);
    for (int i = 0; i < 10; ++i) {
      const FirmState s = random_state(eng);
      const double kc = capital_next(s, p);
      const double vc = solve_variable_input(kc, s, p);
      const double scale = log_profit_revenue(kc, vc, s, p);
      const auto profit = [&](double k, double v) {
        return short_run_profit(k, v, s, p, scale) - std::exp(s.pK + k - scale);
      };
      // Profile out v' by golden section, then maximize the profile over k'.
      const auto profile = [&](double k) {
        const double v = golden_max([&](double x) { return profit(k, x); }, vc - 4.0, vc + 4.0, 1e-10);
        return profit(k, v);
      };
      const double k_star = golden_max(profile, kc - 3.0, kc + 3.0, 1e-8);
      const double v_star = golden_max([&](double x) { return profit(k_star, x); }, vc - 4.0, vc + 4.0, 1e-10);
      CHECK(std::abs(k_star - kc) < 1e-3);
      // Static expectations: re-solving for v at the chosen capital reproduces the joint optimum.
      CHECK(std::abs(v_star - vc) < 1e-3);
    }
  }

  TEST_CASE("capital is affine in productivity and falls with its price") {
    const ModelParams p = truth();
    FirmState s;
    s.delta1 = 9.0;
    s.delta2 = -1.0;
    s.omega = 0.0;
    const double k0 = capital_next(s, p);
    s.omega = 1.0;
    const double k1 = capital_next(s, p);
    s.omega = 0.5;
    CHECK(capital_next(s, p) == doctest::Approx(0.5 * (k0 + k1)).epsilon(1e-12));
    const double e1 = std::exp(s.delta2) + 1.0;
    CHECK(k1 - k0 == doctest::Approx(e1 / (e1 - p.nu) / e1).epsilon(1e-12));
    const double base = capital_next(s, p);
    s.pK += 0.1;
    CHECK(capital_next(s, p) < base);
  }

  TEST_CASE("no interior optimum is a domain error") {
    ModelParams p = truth();
    p.nu = 1.5;
    FirmState s;
    s.delta2 = -3.0;
    CHECK_THROWS_AS(solve_variable_input(0.0, s, p), DomainError);
    CHECK_THROWS_AS(capital_next(s, p), DomainError);
  }

  TEST_CASE("AR(1) calibration is closed form") {
    const LawCoefficients a = calibrate_law({0.0, 0.25, 0.7}, 0.0);
    CHECK(a.mu_omega == doctest::Approx(0.0));
    CHECK(a.rho_omega == doctest::Approx(0.7));
    CHECK(a.sigma2_omega == doctest::Approx(0.1275).epsilon(1e-14));
    const LawCoefficients b = calibrate_law({-1.25, 4.0, 0.85}, 0.0);
    CHECK(b.mu_omega == doctest::Approx(-0.1875).epsilon(1e-14));
    CHECK(b.rho_omega == doctest::Approx(0.85));
    CHECK(b.sigma2_omega == doctest::Approx(1.11).epsilon(1e-14));
  }

  TEST_CASE("nonlinear calibration reproduces the moment targets") {
    const MomentTargets target{0.0, 0.25, 0.7};
    const CalibrationOptions opts;
    const LawCoefficients law = calibrate_law(target, 1.0, opts);
    CHECK(law.alpha_omega == 1.0);
    ModelParams p;
    p.mu_omega = law.mu_omega;
    p.rho_omega = law.rho_omega;
    p.alpha_omega = 1.0;
    CHECK(persistence(p) == doctest::Approx(0.7).epsilon(0.01));

    // Independent long chain with its own generator.
    std::mt19937_64 eng(987654321);
    std::normal_distribution<double> z;
    const int burn = 5000, n = 4000000;
    double w = 0.0, sum = 0.0, sum2 = 0.0, cross = 0.0, prev = 0.0;
    for (int t = 0; t < burn + n; ++t) {
      const double next = law_g(w, p) + std::sqrt(law.sigma2_omega) * z(eng);
      prev = w;
      w = next;
      if (t >= burn) {
        sum += w;
        sum2 += w * w;
        cross += w * prev;
      }
    }
    const double m = sum / n, var = sum2 / n - m * m, corr = (cross / n - m * m) / var;
    CHECK(std::abs(m - 0.0) < 3e-3);
    CHECK(std::abs(var - 0.25) < 3e-3);
    CHECK(std::abs(corr - 0.7) < 3e-3);

    // A 1e6-draw chain with a fixed seed hits the targets to 1e-3.
    std::vector<double> shocks(static_cast<std::size_t>(opts.chain_length + opts.chain_burn_in));
    NormalStream rng(opts.seed, 0x63616c6962ULL);
    for (double& x : shocks) x = rng();
    const MomentTargets fixed = chain_moments(law, shocks, opts.chain_burn_in, 0.0);
    CHECK(std::abs(fixed.mean - 0.0) < 1e-3);
    CHECK(std::abs(fixed.var - 0.25) < 1e-3);
    CHECK(std::abs(fixed.corr - 0.7) < 1e-3);
  }

  TEST_CASE("panels are reproducible and independent of thread scheduling") {
    DgpConfig cfg = baseline_config();
    cfg.n_firms = 300;
    cfg.burn_in = 200;
    cfg.seed = 42;
    const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
    const FirmPanel a = simulate_panel(cfg, law);
    const FirmPanel b = simulate_panel(cfg, law);
    const FirmPanel c = simulate_panel_serial(cfg, law);
    CHECK(a.q == b.q);
    CHECK(a.q == c.q);
    CHECK(a.k_next == c.k_next);
    CHECK(a.v == c.v);
    cfg.seed = 43;
    CHECK(simulate_panel(cfg, law).q != a.q);
  }

  TEST_CASE("panel accounting identities") {
    DgpConfig cfg = baseline_config();
    cfg.n_firms = 200;
    cfg.burn_in = 100;
    const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
    const ModelParams p = true_params(cfg, law);
    const FirmPanel panel = simulate_panel(cfg, law);
    REQUIRE(panel.has_latent);
    for (int i = 0; i < panel.n_firms; ++i) {
      FirmState s;
      s.delta1 = panel.delta1[i];
      s.delta2 = panel.delta2[i];
      s.pK = panel.pK[i];
      s.pV = panel.pV[i];
      for (int t = 0; t < panel.n_periods; ++t) {
        const std::size_t r = panel.index(i, t);
        s.omega = panel.omega[r];
        CHECK(panel.q_star[r] == doctest::Approx(production_f(panel.k[r], panel.v[r], p) + panel.omega[r]).epsilon(1e-12));
        CHECK(panel.q[r] == doctest::Approx(panel.q_star[r] + panel.epsilon[r]).epsilon(1e-12));
        CHECK(panel.p[r] == doctest::Approx(demand_price(panel.q_star[r], s)).epsilon(1e-12));
        CHECK(std::abs(mrmc_residual(panel.v[r], panel.k[r], s, p)) < 1e-10);
        CHECK(panel.k_next[r] == doctest::Approx(capital_next(s, p)).epsilon(1e-12));
        if (t + 1 < panel.n_periods) CHECK(panel.k[panel.index(i, t + 1)] == panel.k_next[r]);
      }
    }
  }

  TEST_CASE("baseline markups and productivity moments") {
    DgpConfig cfg = baseline_config();
    cfg.n_firms = 5000;
    cfg.burn_in = 500;
    cfg.seed = 9;
    const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
    const FirmPanel panel = simulate_panel(cfg, law);
    double m = 0.0, m2 = 0.0;
    for (double d : panel.delta2) {
      const double lm = log_markup_true(d);
      m += lm;
      m2 += lm * lm;
    }
    m /= panel.n_firms;
    const double var = m2 / panel.n_firms - m * m;
    CHECK(m == doctest::Approx(0.25).epsilon(0.02));
    CHECK(var == doctest::Approx(0.0126).epsilon(0.15));
    CHECK(expected_log_markup(cfg.demand) == doctest::Approx(0.25).epsilon(1e-4));

    // Recorded-window moments of omega against the targets, with firm-clustered standard errors.
    const int n = panel.n_firms, t = panel.n_periods;
    double mean = 0.0;
    for (double w : panel.omega) mean += w;
    mean /= static_cast<double>(panel.rows());
    double v = 0.0;
    for (double w : panel.omega) v += (w - mean) * (w - mean);
    v /= static_cast<double>(panel.rows());
    double se_m = 0.0, se_v = 0.0;
    for (int i = 0; i < n; ++i) {
      double a = 0.0, b = 0.0;
      for (int s = 0; s < t; ++s) {
        const double w = panel.omega[panel.index(i, s)];
        a += w - mean;
        b += (w - mean) * (w - mean) - v;
      }
      se_m += a * a;
      se_v += b * b;
    }
    se_m = std::sqrt(se_m) / static_cast<double>(panel.rows());
    se_v = std::sqrt(se_v) / static_cast<double>(panel.rows());
    CHECK(std::abs(mean - 0.0) < 3 * se_m);
    CHECK(std::abs(v - 0.25) < 3 * se_v);
  }

  TEST_CASE("without demand heterogeneity productivity is a function of (k, v, pV)") {
    DgpConfig cfg = baseline_config();
    cfg.demand.var_d1 = 0.0;
    cfg.demand.var_d2 = 0.0;
    cfg.n_firms = 500;
    cfg.burn_in = 100;
    const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
    const FirmPanel panel = simulate_panel(cfg, law);
    NamedColumns x;
    x.names = {"k", "v", "pV"};
    x.data.resize(static_cast<Eigen::Index>(panel.rows()), 3);
    Eigen::VectorXd y(x.data.rows());
    for (std::size_t r = 0; r < panel.rows(); ++r) {
      const auto j = static_cast<Eigen::Index>(r);
      x.data(j, 0) = panel.k[r];
      x.data(j, 1) = panel.v[r];
      x.data(j, 2) = panel.pV[r / static_cast<std::size_t>(panel.n_periods)];
      y(j) = panel.omega[r];
    }
    BasisSpec spec;
    spec.variable_names = x.names;
    spec.total_degree = 4;
    const Eigen::MatrixXd design = build_design(x, spec);
    const LeastSquares ls = least_squares(design, y);
    const Eigen::VectorXd e = y - design * ls.coef;
    const double r2 = 1.0 - e.squaredNorm() / (y.array() - y.mean()).square().sum();
    CHECK(r2 > 0.999);
  }

  TEST_CASE("configuration validation") {
    DgpConfig cfg = baseline_config();
    cfg.model.nu = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = baseline_config();
    cfg.demand.var_d1 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = baseline_config();
    cfg.n_periods = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(baseline_config().canonical() != modified_config().canonical());
    CHECK(hash_hex("a") != hash_hex("b"));
    CHECK(hash_hex("a").size() == 16);
  }
}
