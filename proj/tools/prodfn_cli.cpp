#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "prodfn/experiment.hpp"
#include "prodfn/gmm.hpp"
#include "prodfn/invertibility.hpp"
#include "prodfn/panel_io.hpp"
#include "prodfn/rng.hpp"
#include "prodfn/sensitivity.hpp"

using namespace prodfn;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

struct Common {
  std::string config;
  std::string preset;
  long long seed = -1;
  int threads = 0;
  bool paper_scale = false;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else if (c.preset == "modified") {
    cfg.dgp = modified_config();
  } else if (!c.preset.empty() && c.preset != "baseline") {
    throw ConfigError("--preset must be baseline or modified");
  }
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (c.paper_scale) cfg.apply_paper_scale();
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json params_json(const ModelParams& p) {
  nlohmann::ordered_json j;
  const Vector6d v = p.to_vector();
  for (int i = 0; i < kNumParams; ++i) j[kParamNames[i]] = v(i);
  return j;
}

MomentKind parse_kind(const std::string& s) {
  if (s == "original") return MomentKind::Original;
  if (s == "modified") return MomentKind::Modified;
  throw ConfigError("--moment must be original or modified");
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

struct PanelArgs {
  std::string path;
  std::string map;
  int case_id = 1;
  std::string step1 = "ols";
  int step1_degree = 4;
  int instrument_degree = 4;
  std::string orientation = "lagged";
};

void add_panel_args(CLI::App* sub, PanelArgs& a) {
  sub->add_option("--panel", a.path, "Panel CSV in the simulator schema")->required();
  sub->add_option("--map", a.map, "Column renames, e.g. q=output,k=capital");
  sub->add_option("--case", a.case_id, "Observable set for step 1 (1, 2 or 3)")->check(CLI::Range(1, 3));
  sub->add_option("--step1", a.step1, "ols or mlp")->check(CLI::IsMember({"ols", "mlp"}));
  sub->add_option("--step1-degree", a.step1_degree, "Hermite degree of the step-1 basis");
  sub->add_option("--instrument-degree", a.instrument_degree, "Hermite degree of the instruments");
  sub->add_option("--orientation", a.orientation, "lagged or current")->check(CLI::IsMember({"lagged", "current"}));
}

struct Prepared {
  FirmPanel panel;
  Step1Fit fit;
  EstimationSample sample;
};

Prepared prepare(const PanelArgs& a, std::uint64_t seed) {
  Prepared p;
  p.panel = read_panel_csv(a.path, parse_column_map(a.map));
  const Orientation o = a.orientation == "current" ? Orientation::Current : Orientation::Lagged;
  if (a.step1 == "ols") {
    p.fit = fit_ols(p.panel, a.case_id, a.step1_degree, o);
  } else {
    MlpHyper h;
    h.seed = seed;
    p.fit = fit_mlp(p.panel, a.case_id, h, o);
  }
  p.sample = make_sample(p.panel, p.fit, a.instrument_degree);
  return p;
}

std::string invert_table(const LongPanel& lp, InvertTestOptions opts) {
  std::string s = "degree,n_obs,n_firms,dof,wald,p_chi2,f_stat,p_f,dropped\n";
  for (int d : {2, 3, 4}) {
    opts.degree = d;
    const InvertTestResult r = test_mean_independence(lp, opts);
    std::string dropped;
    for (const auto& n : r.dropped_beta) dropped += (dropped.empty() ? "" : ";") + n;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%zu,%.6g,%.6g,%.6g,%.6g,", d, r.n_obs, r.n_firms, r.beta_names.size(),
                  r.wald, r.p_chi2, r.f_stat, r.p_f);
    s += buf + dropped + "\n";
    for (const auto& w : r.warnings) std::cerr << "warning (degree " << d << "): " << w << "\n";
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Production function estimation under non-invertible productivity"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Configuration file (key = value or .json)");
    sub->add_option("--preset", common.preset, "baseline or modified, when no config is given");
    sub->add_option("--seed", common.seed, "Master seed (overrides the config)");
    sub->add_option("--threads", common.threads, "OpenMP threads (0 = default)");
    sub->add_flag("--paper-scale", common.paper_scale, "S = 1000, N = 5000, T0 = 5000");
  };

  auto* calibrate = app.add_subcommand("calibrate", "Solve the law-of-motion coefficients for the config");
  add_common(calibrate);

  std::string sim_out;
  bool include_latent = false;
  int replication = 0;
  auto* simulate = app.add_subcommand("simulate", "Simulate one panel and write it as CSV");
  add_common(simulate);
  simulate->add_option("--out", sim_out, "Output CSV path")->required();
  simulate->add_flag("--include-latent", include_latent, "Also write omega, epsilon, q_star, delta1, delta2");
  simulate->add_option("--replication", replication, "Replication index whose seed to use");

  PanelArgs est_args;
  std::string est_moment = "original";
  std::string est_out;
  auto* estimate_cmd = app.add_subcommand("estimate", "Two-step GMM on a panel CSV");
  add_common(estimate_cmd);
  add_panel_args(estimate_cmd, est_args);
  estimate_cmd->add_option("--moment", est_moment, "original or modified");
  estimate_cmd->add_option("--out", est_out, "Write the JSON result here instead of stdout");

  PanelArgs lm_args;
  std::string lm_moment = "original";
  std::string lm_out;
  auto* lm_cmd = app.add_subcommand("lm-test", "Clustered LM test of the true parameters");
  add_common(lm_cmd);
  add_panel_args(lm_cmd, lm_args);
  lm_cmd->add_option("--moment", lm_moment, "original (plug-in corrected) or modified");
  lm_cmd->add_option("--out", lm_out, "Write the JSON result here instead of stdout");

  PanelArgs sens_args;
  std::string sens_out;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Estimate, then report d theta / d lambda");
  add_common(sens_cmd);
  add_panel_args(sens_cmd, sens_args);
  sens_cmd->add_option("--out", sens_out, "Write the JSON result here instead of stdout");

  std::string inv_panel, inv_map, inv_vars = "k,v,pV", inv_outcome = "q", inv_out;
  int inv_degree = 3;
  bool inv_table = false;
  auto* inv_cmd = app.add_subcommand("test-invertibility", "Mean-independence test of lagged observables");
  inv_cmd->add_option("--panel", inv_panel, "Long-format CSV with firm_id and period")->required();
  inv_cmd->add_option("--map", inv_map, "Column renames, e.g. q=output,firm_id=id");
  inv_cmd->add_option("--vars", inv_vars, "Comma-separated observables x");
  inv_cmd->add_option("--outcome", inv_outcome, "Outcome column");
  inv_cmd->add_option("--degree", inv_degree, "Hermite degree of r(x_t)");
  inv_cmd->add_flag("--table", inv_table, "Report degrees 2, 3 and 4 as CSV");
  inv_cmd->add_option("--out", inv_out, "Write the result here instead of stdout");

  std::string exp_out;
  int exp_reps = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "Monte Carlo replications with summary tables");
  add_common(exp_cmd);
  exp_cmd->add_option("--out", exp_out, "Output directory (overrides the config)");
  exp_cmd->add_option("--replications", exp_reps, "Number of replications (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (common.threads > 0) omp_set_num_threads(common.threads);

    if (*calibrate) {
      const ExperimentConfig cfg = resolve(common);
      const ExperimentTruth t = experiment_truth(cfg);
      nlohmann::ordered_json j;
      j["mu_omega"] = t.law.mu_omega;
      j["rho_omega"] = t.law.rho_omega;
      j["sigma2_omega"] = t.law.sigma2_omega;
      j["alpha_omega"] = t.law.alpha_omega;
      j["persistence"] = t.persistence;
      j["expected_log_markup"] = t.markup;
      std::cout << j.dump(2) << "\n";
    } else if (*simulate) {
      const ExperimentConfig cfg = resolve(common);
      const ExperimentTruth t = experiment_truth(cfg);
      DgpConfig dgp = cfg.dgp;
      dgp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replication), 1);
      const FirmPanel panel = simulate_panel(dgp, t.law);
      write_panel_csv(panel, sim_out, include_latent);
      write_panel_sidecar(panel, dgp, sim_out + ".json");
    } else if (*estimate_cmd) {
      const ExperimentConfig cfg = resolve(common);
      const ExperimentTruth t = experiment_truth(cfg);
      const Prepared p = prepare(est_args, cfg.seed);
      const MomentKind kind = parse_kind(est_moment);
      const Weighting w = weighting_matrix(t.theta0, p.sample, MomentKind::Original);
      GmmOptions opts;
      opts.seed = cfg.seed;
      opts.restarts = cfg.gmm_restarts;
      const GmmResult g = estimate(p.sample, kind, w.w, t.theta0, opts);
      nlohmann::ordered_json j = nlohmann::ordered_json::parse(g.to_json());
      j["average_log_markup"] = average_log_markup(p.panel, g.theta_hat);
      j["persistence"] = persistence(g.theta_hat);
      j["start"] = params_json(t.theta0);
      j["step1"] = nlohmann::ordered_json::parse(p.fit.to_json());
      emit(j.dump(2) + "\n", est_out);
      if (!g.converged) std::cerr << "warning: optimizer did not converge\n";
    } else if (*lm_cmd) {
      const ExperimentConfig cfg = resolve(common);
      const ExperimentTruth t = experiment_truth(cfg);
      const Prepared p = prepare(lm_args, cfg.seed);
      const MomentKind kind = parse_kind(lm_moment);
      const LmResult r = (kind == MomentKind::Original && lm_args.step1 == "ols")
                             ? lm_test_plugin(t.theta0, p.sample)
                             : lm_test_standard(t.theta0, p.sample, kind);
      nlohmann::ordered_json j = nlohmann::ordered_json::parse(r.to_json());
      j["theta0"] = params_json(t.theta0);
      emit(j.dump(2) + "\n", lm_out);
    } else if (*sens_cmd) {
      const ExperimentConfig cfg = resolve(common);
      const ExperimentTruth t = experiment_truth(cfg);
      const Prepared p = prepare(sens_args, cfg.seed);
      const Weighting w = weighting_matrix(t.theta0, p.sample, MomentKind::Original);
      GmmOptions opts;
      opts.seed = cfg.seed;
      opts.restarts = cfg.gmm_restarts;
      const GmmResult g = estimate(p.sample, MomentKind::Original, w.w, t.theta0, opts);
      const SensitivityResult s = diagnostic(g.theta_hat, p.sample, w.w);
      nlohmann::ordered_json j;
      j["estimate"] = nlohmann::ordered_json::parse(g.to_json());
      j["sensitivity"] = nlohmann::ordered_json::parse(s.to_json());
      emit(j.dump(2) + "\n", sens_out);
    } else if (*inv_cmd) {
      const LongPanel lp = long_panel_from_table(read_csv(inv_panel), parse_column_map(inv_map));
      InvertTestOptions opts;
      opts.x_vars.clear();
      std::string item;
      std::istringstream is(inv_vars);
      while (std::getline(is, item, ',')) {
        if (!item.empty()) opts.x_vars.push_back(item);
      }
      opts.outcome = inv_outcome;
      opts.degree = inv_degree;
      if (inv_table) {
        emit(invert_table(lp, opts), inv_out);
      } else {
        const InvertTestResult r = test_mean_independence(lp, opts);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        emit(r.to_json() + "\n", inv_out);
      }
    } else if (*exp_cmd) {
      ExperimentConfig cfg = resolve(common);
      if (!exp_out.empty()) cfg.output_dir = exp_out;
      if (exp_reps > 0) cfg.replications = exp_reps;
      cfg.validate();
      const ExperimentResult r = run_experiment(cfg, common.threads);
      write_experiment_outputs(r, cfg, cfg.output_dir);
      std::cout << summary_csv(r);
      if (r.unreliable) {
        std::cerr << "error: " << r.failed_replications << " of " << r.replications
                  << " replications failed, above the 2% budget; results flagged unreliable\n";
        return kExitBudget;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
