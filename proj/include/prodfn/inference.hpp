#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "prodfn/gmm.hpp"

namespace prodfn {

enum class LmVariant { PluginCorrected, Standard };
const char* lm_variant_name(LmVariant v);

struct LmResult {
  LmVariant variant = LmVariant::Standard;
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;          // rank actually used
  int nominal_dof = 0;  // dim(h)
  double condition = 0.0;
  std::vector<std::string> warnings;

  bool rejects(double level) const { return p_value < level; }
  std::string to_json() const;
};

// Firm-clustered blocks, each (1/n) sum_i (sum_t a_it)(sum_t' b_it')^T with
// a, b in {h m, r u}.
struct OmegaBlocks {
  Eigen::MatrixXd o11, o12, o22;
};
OmegaBlocks clustered_omega_blocks(const EstimationSample& s, const Eigen::VectorXd& m);
// Literal double sums over (t, t') within each firm; used as a test reference.
OmegaBlocks clustered_omega_blocks_naive(const EstimationSample& s, const Eigen::VectorXd& m);

// Original moment with the plug-in correction for an OLS first step.
LmResult lm_test_plugin(const ModelParams& theta0, const EstimationSample& s);
// Clustered LM test without plug-in correction (meant for the modified moment).
LmResult lm_test_standard(const ModelParams& theta0, const EstimationSample& s,
                          MomentKind kind = MomentKind::Modified);

// Upper tail of chi-square(dof); 1 when dof == 0.
double chi2_upper_tail(double x, int dof);

}  // namespace prodfn
