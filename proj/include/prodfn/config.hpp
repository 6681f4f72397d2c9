#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prodfn/dgp.hpp"
#include "prodfn/gmm.hpp"
#include "prodfn/step1.hpp"

namespace prodfn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  DgpConfig dgp;
  int replications = 50;
  std::vector<int> cases = {1, 2, 3};
  std::vector<MomentKind> moments = {MomentKind::Original};
  Step1Kind step1 = Step1Kind::Ols;
  Orientation orientation = Orientation::Lagged;
  int step1_degree = 4;
  int instrument_degree = 4;
  bool lm_test = true;
  bool sensitivity = false;
  bool invertibility = false;
  int invertibility_degree = 3;
  std::vector<std::string> invertibility_vars = {"k", "v", "pV"};
  int calibration_length = 1000000;
  int gmm_restarts = 5;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  void validate() const;
  // Restores the full-size design: S = 1000, N = 5000, T0 = 5000.
  void apply_paper_scale();
  // One `key = value` line per field, in a fixed order.
  std::string to_text() const;
};

// Flat `key = value` text with `#` comments. A leading `preset = baseline|modified`
// selects the parameterization the remaining keys override.
ExperimentConfig parse_config_text(const std::string& text);
// Object with the same keys as the text form.
ExperimentConfig parse_config_json(const std::string& text);
// Chooses the parser by extension (.json or anything else).
ExperimentConfig load_config(const std::string& path);

std::vector<std::string> config_keys();

}  // namespace prodfn
