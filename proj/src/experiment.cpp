#include "prodfn/experiment.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <mutex>
#include <sstream>

#include "prodfn/gmm.hpp"
#include "prodfn/invertibility.hpp"
#include "prodfn/panel_io.hpp"
#include "prodfn/rng.hpp"
#include "prodfn/sensitivity.hpp"

namespace prodfn {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Substream tags for the per-replication seeds.
enum : std::uint64_t { kStreamPanel = 1, kStreamGmm = 2, kStreamMlp = 3 };

}  // namespace

LawCoefficients cached_calibration(const DgpConfig& dgp, int chain_length) {
  static std::mutex mu;
  static std::map<std::string, LawCoefficients> cache;
  char key[200];
  std::snprintf(key, sizeof key, "%.17g|%.17g|%.17g|%.17g|%d", dgp.targets.mean, dgp.targets.var,
                dgp.targets.corr, dgp.alpha_omega, chain_length);
  {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  CalibrationOptions opts;
  opts.chain_length = chain_length;
  const LawCoefficients law = calibrate_law(dgp.targets, dgp.alpha_omega, opts);
  std::lock_guard<std::mutex> lock(mu);
  cache[key] = law;
  return law;
}

ExperimentTruth experiment_truth(const ExperimentConfig& cfg) {
  ExperimentTruth t;
  t.law = cached_calibration(cfg.dgp, cfg.calibration_length);
  t.theta0 = true_params(cfg.dgp, t.law);
  t.markup = expected_log_markup(cfg.dgp.demand);
  t.persistence = persistence(t.theta0);
  return t;
}

ReplicationOutput run_replication(const ExperimentConfig& cfg, const ExperimentTruth& truth, int rep) {
  ReplicationOutput out;
  const auto fail_all = [&](const std::string& msg) {
    out.failed = true;
    out.estimates.clear();
    for (int c : cfg.cases) {
      for (MomentKind kind : cfg.moments) {
        EstimateRecord e;
        e.replication = rep;
        e.case_id = c;
        e.kind = kind;
        e.error = msg;
        out.estimates.push_back(e);
      }
    }
    out.invert.replication = rep;
    out.invert.error = msg;
  };

  DgpConfig dgp = cfg.dgp;
  dgp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep), kStreamPanel);
  FirmPanel panel;
  try {
    panel = simulate_panel(dgp, truth.law);
  } catch (const std::exception& e) {
    fail_all(std::string("simulation: ") + e.what());
    return out;
  }

  for (int c : cfg.cases) {
    std::string case_error;
    EstimationSample sample;
    Weighting w;
    try {
      Step1Fit fit;
      if (cfg.step1 == Step1Kind::Ols) {
        fit = fit_ols(panel, c, cfg.step1_degree, cfg.orientation);
      } else {
        MlpHyper hyper;
        hyper.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep), kStreamMlp);
        fit = fit_mlp(panel, c, hyper, cfg.orientation);
      }
      sample = make_sample(panel, fit, cfg.instrument_degree);
      w = weighting_matrix(truth.theta0, sample, MomentKind::Original);
    } catch (const std::exception& e) {
      case_error = std::string("case ") + std::to_string(c) + ": " + e.what();
    }
    for (MomentKind kind : cfg.moments) {
      EstimateRecord e;
      e.replication = rep;
      e.case_id = c;
      e.kind = kind;
      if (!case_error.empty()) {
        e.error = case_error;
        out.failed = true;
        out.estimates.push_back(e);
        continue;
      }
      try {
        GmmOptions gopts;
        gopts.restarts = cfg.gmm_restarts;
        gopts.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep),
                                 kStreamGmm * 16 + static_cast<std::uint64_t>(c) * 2 +
                                     (kind == MomentKind::Modified ? 1 : 0));
        const GmmResult g = estimate(sample, kind, w.w, truth.theta0, gopts);
        e.theta = g.theta_hat.to_vector();
        e.objective = g.objective;
        e.converged = g.converged;
        e.markup = average_log_markup(panel, g.theta_hat);
        e.persistence = persistence(g.theta_hat);
        if (cfg.lm_test) {
          if (kind == MomentKind::Original && cfg.step1 == Step1Kind::Ols) {
            e.lm = lm_test_plugin(truth.theta0, sample);
          } else {
            e.lm = lm_test_standard(truth.theta0, sample, kind);
          }
          e.has_lm = true;
        }
        if (cfg.sensitivity && kind == MomentKind::Original) {
          const SensitivityResult s = diagnostic(g.theta_hat, sample, w.w);
          e.dtheta_dlambda = s.dtheta_dlambda;
          e.sensitivity_reliable = s.reliable;
          e.has_sensitivity = true;
        }
        e.ok = true;
        if (!e.converged) out.failed = true;
      } catch (const std::exception& ex) {
        e.error = std::string("case ") + std::to_string(c) + " " + moment_kind_name(kind) + ": " + ex.what();
        out.failed = true;
      }
      out.estimates.push_back(e);
    }
  }

  out.invert.replication = rep;
  if (cfg.invertibility) {
    try {
      InvertTestOptions opts;
      opts.x_vars = cfg.invertibility_vars;
      opts.degree = cfg.invertibility_degree;
      const InvertTestResult r = test_mean_independence(long_panel_from_panel(panel), opts);
      out.invert.ok = true;
      out.invert.wald = r.wald;
      out.invert.f_stat = r.f_stat;
      out.invert.p_chi2 = r.p_chi2;
      out.invert.p_f = r.p_f;
      out.invert.dof = static_cast<int>(r.beta_names.size());
    } catch (const std::exception& ex) {
      out.invert.error = ex.what();
      out.failed = true;
    }
  }
  return out;
}

SummaryStat summary_stat(const std::vector<double>& x, double truth) {
  SummaryStat s;
  s.count = static_cast<int>(x.size());
  if (x.empty()) {
    s.mean = s.bias = s.variance = s.mse = std::nan("");
    return s;
  }
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.variance = ss / static_cast<double>(x.size());
  s.bias = s.mean - truth;
  s.mse = s.bias * s.bias + s.variance;
  return s;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const ExperimentTruth& truth,
                                  const std::vector<EstimateRecord>& records) {
  std::vector<SummaryRow> rows;
  for (int c : cfg.cases) {
    for (MomentKind kind : cfg.moments) {
      SummaryRow row;
      row.case_id = c;
      row.kind = kind;
      std::vector<double> mk, ps;
      Vector6d sum = Vector6d::Zero();
      int rejections = 0;
      for (const auto& e : records) {
        if (e.case_id != c || e.kind != kind) continue;
        if (e.has_lm) {
          ++row.lm_count;
          if (e.lm.rejects(0.05)) ++rejections;
          row.lm_variant = lm_variant_name(e.lm.variant);
        }
        if (!e.ok || !e.converged) {
          ++row.failed;
          continue;
        }
        ++row.used;
        mk.push_back(e.markup);
        ps.push_back(e.persistence);
        sum += e.theta - truth.theta0.to_vector();
      }
      row.markup = summary_stat(mk, truth.markup);
      row.persistence = summary_stat(ps, truth.persistence);
      row.theta_bias = row.used > 0 ? Vector6d(sum / row.used) : Vector6d::Constant(std::nan(""));
      row.lm_rejection = row.lm_count > 0 ? static_cast<double>(rejections) / row.lm_count : std::nan("");
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<DiagnosticRow> summarize_diagnostics(const ExperimentConfig& cfg, const ExperimentTruth& truth,
                                                 const std::vector<EstimateRecord>& records) {
  std::vector<DiagnosticRow> rows;
  if (!cfg.sensitivity) return rows;
  const Vector6d theta0 = truth.theta0.to_vector();
  for (int c : cfg.cases) {
    DiagnosticRow row;
    row.case_id = c;
    std::vector<Vector6d> b, d;
    for (const auto& e : records) {
      if (e.case_id != c || e.kind != MomentKind::Original || !e.ok || !e.converged || !e.has_sensitivity) continue;
      b.push_back(e.theta - theta0);
      d.push_back(e.dtheta_dlambda);
      if (!e.sensitivity_reliable) ++row.unreliable;
    }
    row.count = static_cast<int>(b.size());
    const auto moments = [](const std::vector<Vector6d>& x, Vector6d& mean, Vector6d& sd) {
      mean.setZero();
      sd.setZero();
      if (x.empty()) {
        mean.setConstant(std::nan(""));
        sd.setConstant(std::nan(""));
        return;
      }
      for (const auto& v : x) mean += v;
      mean /= static_cast<double>(x.size());
      for (const auto& v : x) sd += (v - mean).cwiseAbs2();
      sd = (sd / static_cast<double>(x.size())).cwiseSqrt();
    };
    moments(b, row.bias_mean, row.bias_sd);
    moments(d, row.diag_mean, row.diag_sd);
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.truth = experiment_truth(cfg);
  res.replications = cfg.replications;

  std::vector<ReplicationOutput> outs(static_cast<std::size_t>(cfg.replications));
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
  for (int r = 0; r < cfg.replications; ++r) {
    try {
      outs[static_cast<std::size_t>(r)] = run_replication(cfg, res.truth, r);
    } catch (const std::exception& e) {
      ReplicationOutput o;
      o.failed = true;
      o.invert.replication = r;
      o.invert.error = e.what();
      outs[static_cast<std::size_t>(r)] = o;
    }
  }

  for (const auto& o : outs) {
    if (o.failed) ++res.failed_replications;
    res.estimates.insert(res.estimates.end(), o.estimates.begin(), o.estimates.end());
    if (cfg.invertibility) res.invert.push_back(o.invert);
  }
  res.failure_rate = static_cast<double>(res.failed_replications) / cfg.replications;
  res.unreliable = res.failure_rate > kFailureBudget;
  res.summary = summarize(cfg, res.truth, res.estimates);
  res.diagnostics = summarize_diagnostics(cfg, res.truth, res.estimates);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::string summary_csv(const ExperimentResult& r) {
  std::string s =
      "case,moment,used,failed,markup_truth,markup_mean,markup_bias,markup_variance,markup_mse,"
      "persistence_truth,persistence_mean,persistence_bias,persistence_variance,persistence_mse";
  for (const char* n : kParamNames) s += std::string(",bias_") + n;
  s += ",lm_variant,lm_count,lm_rejection_5pct\n";
  for (const auto& row : r.summary) {
    s += std::to_string(row.case_id) + "," + moment_kind_name(row.kind) + "," + std::to_string(row.used) +
         "," + std::to_string(row.failed) + "," + num(r.truth.markup) + "," + num(row.markup.mean) + "," +
         num(row.markup.bias) + "," + num(row.markup.variance) + "," + num(row.markup.mse) + "," +
         num(r.truth.persistence) + "," + num(row.persistence.mean) + "," + num(row.persistence.bias) + "," +
         num(row.persistence.variance) + "," + num(row.persistence.mse);
    for (int j = 0; j < kNumParams; ++j) s += "," + num(row.theta_bias(j));
    s += "," + (row.lm_variant.empty() ? std::string("none") : row.lm_variant) + "," +
         std::to_string(row.lm_count) + "," + num(row.lm_rejection) + "\n";
  }
  return s;
}

std::string estimates_csv(const ExperimentResult& r) {
  std::string s = "replication,case,moment,ok,converged";
  for (const char* n : kParamNames) s += std::string(",") + n;
  s += ",objective,markup,persistence,error\n";
  for (const auto& e : r.estimates) {
    s += std::to_string(e.replication) + "," + std::to_string(e.case_id) + "," + moment_kind_name(e.kind) + "," +
         (e.ok ? "1" : "0") + "," + (e.converged ? "1" : "0");
    for (int j = 0; j < kNumParams; ++j) s += "," + num(e.ok ? e.theta(j) : std::nan(""));
    std::string err = e.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    s += "," + num(e.ok ? e.objective : std::nan("")) + "," + num(e.ok ? e.markup : std::nan("")) + "," +
         num(e.ok ? e.persistence : std::nan("")) + "," + err + "\n";
  }
  return s;
}

std::string pvalues_csv(const ExperimentResult& r) {
  std::string s = "replication,case,moment,variant,statistic,dof,nominal_dof,p_value\n";
  for (const auto& e : r.estimates) {
    if (!e.has_lm) continue;
    s += std::to_string(e.replication) + "," + std::to_string(e.case_id) + "," + moment_kind_name(e.kind) + "," +
         lm_variant_name(e.lm.variant) + "," + num(e.lm.statistic) + "," + std::to_string(e.lm.dof) + "," +
         std::to_string(e.lm.nominal_dof) + "," + num(e.lm.p_value) + "\n";
  }
  return s;
}

std::string diagnostics_csv(const ExperimentResult& r) {
  std::string s = "case,quantity,statistic";
  for (const char* n : kParamNames) s += std::string(",") + n;
  s += ",count,unreliable\n";
  const auto line = [&](int c, const char* q, const char* st, const Vector6d& v, const DiagnosticRow& row) {
    s += std::to_string(c) + "," + q + "," + st;
    for (int j = 0; j < kNumParams; ++j) s += "," + num(v(j));
    s += "," + std::to_string(row.count) + "," + std::to_string(row.unreliable) + "\n";
  };
  for (const auto& row : r.diagnostics) {
    line(row.case_id, "bias", "mean", row.bias_mean, row);
    line(row.case_id, "bias", "sd", row.bias_sd, row);
    line(row.case_id, "diagnostic", "mean", row.diag_mean, row);
    line(row.case_id, "diagnostic", "sd", row.diag_sd, row);
  }
  return s;
}

std::string invertibility_csv(const ExperimentResult& r) {
  std::string s = "replication,ok,wald,f_stat,dof,p_chi2,p_f\n";
  for (const auto& e : r.invert) {
    s += std::to_string(e.replication) + "," + (e.ok ? "1" : "0") + "," + num(e.wald) + "," + num(e.f_stat) + "," +
         std::to_string(e.dof) + "," + num(e.p_chi2) + "," + num(e.p_f) + "\n";
  }
  return s;
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir = "-";
  return hash_hex(c.to_text());
}

std::string manifest_json(const ExperimentResult& r, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["replications"] = r.replications;
  j["failed_replications"] = r.failed_replications;
  j["failure_rate"] = r.failure_rate;
  j["unreliable"] = r.unreliable;
  j["law"] = {{"mu_omega", r.truth.law.mu_omega},
              {"rho_omega", r.truth.law.rho_omega},
              {"sigma2_omega", r.truth.law.sigma2_omega},
              {"alpha_omega", r.truth.law.alpha_omega}};
  j["truth"] = {{"markup", r.truth.markup}, {"persistence", r.truth.persistence}};
  j["versions"] = {{"prodfn", kLibraryVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"compiler", __VERSION__}};
  nlohmann::ordered_json c;
  std::istringstream is(cfg.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    // The output location does not affect results; leaving it out keeps manifests comparable.
    if (line.substr(0, eq) == "output_dir") continue;
    c[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = c;
  return j.dump(2) + "\n";
}

void write_experiment_outputs(const ExperimentResult& r, const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  write_file_atomic(path("summary.csv"), summary_csv(r));
  write_file_atomic(path("estimates.csv"), estimates_csv(r));
  if (cfg.lm_test) write_file_atomic(path("pvalues.csv"), pvalues_csv(r));
  if (cfg.sensitivity) write_file_atomic(path("diagnostics.csv"), diagnostics_csv(r));
  if (cfg.invertibility) write_file_atomic(path("invertibility.csv"), invertibility_csv(r));
  write_file_atomic(path("manifest.json"), manifest_json(r, cfg));
  nlohmann::ordered_json t;
  t["seconds"] = r.seconds;
  t["threads"] = omp_get_max_threads();
  write_file_atomic(path("timing.json"), t.dump(2) + "\n");
}

}  // namespace prodfn
