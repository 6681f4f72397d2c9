#pragma once

#include <string>
#include <vector>

#include "prodfn/config.hpp"
#include "prodfn/inference.hpp"

namespace prodfn {

inline constexpr const char* kLibraryVersion = "1.0.0";

// Law coefficients for the configuration, memoized per (targets, alpha_omega, chain length).
LawCoefficients cached_calibration(const DgpConfig& dgp, int chain_length);

struct ExperimentTruth {
  LawCoefficients law;
  ModelParams theta0;
  double markup = 0.0;       // E[log(1 + exp(delta2))]
  double persistence = 0.0;  // g'(0) under theta0
};

ExperimentTruth experiment_truth(const ExperimentConfig& cfg);

struct EstimateRecord {
  int replication = 0;
  int case_id = 1;
  MomentKind kind = MomentKind::Original;
  bool ok = false;
  bool converged = false;
  std::string error;
  Vector6d theta = Vector6d::Zero();
  double objective = 0.0;
  double markup = 0.0;
  double persistence = 0.0;
  bool has_lm = false;
  LmResult lm;
  bool has_sensitivity = false;
  bool sensitivity_reliable = true;
  Vector6d dtheta_dlambda = Vector6d::Zero();
};

struct InvertRecord {
  int replication = 0;
  bool ok = false;
  std::string error;
  double wald = 0.0;
  double f_stat = 0.0;
  double p_chi2 = 1.0;
  double p_f = 1.0;
  int dof = 0;
};

struct ReplicationOutput {
  std::vector<EstimateRecord> estimates;
  InvertRecord invert;
  bool failed = false;
};

// One replication: simulate, fit step 1 per case, estimate per moment kind, and run the
// requested tests. Seeds derive from (cfg.seed, rep) only.
ReplicationOutput run_replication(const ExperimentConfig& cfg, const ExperimentTruth& truth, int rep);

// Mean, bias, variance (1/S) and MSE = bias^2 + variance.
struct SummaryStat {
  int count = 0;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
};
SummaryStat summary_stat(const std::vector<double>& x, double truth);

struct SummaryRow {
  int case_id = 1;
  MomentKind kind = MomentKind::Original;
  int used = 0;
  int failed = 0;
  SummaryStat markup;
  SummaryStat persistence;
  Vector6d theta_bias = Vector6d::Zero();
  std::string lm_variant;
  int lm_count = 0;
  double lm_rejection = 0.0;  // at the 5% level
};

struct DiagnosticRow {
  int case_id = 1;
  int count = 0;
  Vector6d bias_mean = Vector6d::Zero();
  Vector6d bias_sd = Vector6d::Zero();
  Vector6d diag_mean = Vector6d::Zero();
  Vector6d diag_sd = Vector6d::Zero();
  int unreliable = 0;
};

struct ExperimentResult {
  ExperimentTruth truth;
  std::vector<EstimateRecord> estimates;
  std::vector<InvertRecord> invert;
  std::vector<SummaryRow> summary;
  std::vector<DiagnosticRow> diagnostics;
  int replications = 0;
  int failed_replications = 0;
  double failure_rate = 0.0;
  bool unreliable = false;  // more than 2% of replications failed
  double seconds = 0.0;
};

inline constexpr double kFailureBudget = 0.02;

// Replications run in parallel; `threads` <= 0 keeps the OpenMP default.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 0);

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const ExperimentTruth& truth,
                                  const std::vector<EstimateRecord>& records);
std::vector<DiagnosticRow> summarize_diagnostics(const ExperimentConfig& cfg, const ExperimentTruth& truth,
                                                 const std::vector<EstimateRecord>& records);

std::string summary_csv(const ExperimentResult& r);
std::string estimates_csv(const ExperimentResult& r);
std::string pvalues_csv(const ExperimentResult& r);
std::string diagnostics_csv(const ExperimentResult& r);
std::string invertibility_csv(const ExperimentResult& r);
std::string manifest_json(const ExperimentResult& r, const ExperimentConfig& cfg);

// Writes summary.csv, estimates.csv, pvalues.csv, diagnostics.csv (when sensitivity is on),
// invertibility.csv (when requested), manifest.json and timing.json. Everything except
// timing.json is a deterministic function of the configuration.
void write_experiment_outputs(const ExperimentResult& r, const ExperimentConfig& cfg,
                              const std::string& dir);

std::string config_hash(const ExperimentConfig& cfg);

}  // namespace prodfn
