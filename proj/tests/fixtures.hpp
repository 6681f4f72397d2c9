#pragma once

#include "prodfn/dgp.hpp"

namespace prodfn::testing {

struct Simulated {
  DgpConfig cfg;
  LawCoefficients law;
  ModelParams theta0;
  FirmPanel panel;
};

inline Simulated simulate(DgpConfig cfg, int n_firms, std::uint64_t seed, int burn_in = 300) {
  Simulated s;
  cfg.n_firms = n_firms;
  cfg.burn_in = burn_in;
  cfg.seed = seed;
  s.cfg = cfg;
  s.law = calibrate_law(cfg.targets, cfg.alpha_omega);
  s.theta0 = true_params(cfg, s.law);
  s.panel = simulate_panel(cfg, s.law);
  return s;
}

inline DgpConfig ar1_config() {
  DgpConfig c = baseline_config();
  c.alpha_omega = 0.0;
  return c;
}

inline DgpConfig nonlinear_config() {
  DgpConfig c = baseline_config();
  c.alpha_omega = 1.0;
  return c;
}

// Demand heterogeneity switched off: productivity is a function of the observables.
inline DgpConfig invertible_config(double alpha_omega = 0.5) {
  DgpConfig c = baseline_config();
  c.alpha_omega = alpha_omega;
  c.demand.var_d1 = 0.0;
  c.demand.var_d2 = 0.0;
  return c;
}

}  // namespace prodfn::testing
