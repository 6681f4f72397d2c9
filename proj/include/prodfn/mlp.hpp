#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace prodfn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MlpHyper {
  int hidden = 128;
  int layers = 2;
  double learning_rate = 0.01;
  int batch_size = 500;
  int patience = 10;
  int max_epochs = 500;
  double validation_fraction = 0.2;
  std::uint64_t seed = 12345;
};

// Fully connected ReLU network with a linear scalar output. Inputs and target are
// standardized with statistics from the training split.
struct MlpNetwork {
  std::vector<Eigen::MatrixXd> weights;  // layer l maps width_l -> width_{l+1}
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd in_mean, in_sd;
  double out_mean = 0.0, out_sd = 1.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

struct MlpTraining {
  MlpNetwork net;
  MlpHyper hyper;
  int epochs = 0;
  double best_validation_mse = 0.0;  // in the original units of y
  double initial_validation_mse = 0.0;
  std::vector<double> validation_history;
};

// Firms (not rows) are split into training and validation sets; training stops when
// the validation MSE has not improved for `patience` epochs.
MlpTraining train_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const std::vector<int>& firm, const MlpHyper& hyper);

}  // namespace prodfn
