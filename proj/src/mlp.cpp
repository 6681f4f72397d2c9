#include "prodfn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "prodfn/rng.hpp"

namespace prodfn {

namespace {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sd) {
  return ((x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
}

// Forward pass on standardized inputs; activations[l] is the input to layer l.
Eigen::VectorXd forward(const MlpNetwork& net, const Eigen::MatrixXd& xs,
                        std::vector<Eigen::MatrixXd>* activations) {
  Eigen::MatrixXd a = xs;
  const std::size_t L = net.weights.size();
  if (activations) activations->clear();
  for (std::size_t l = 0; l < L; ++l) {
    if (activations) activations->push_back(a);
    Eigen::MatrixXd z = (a * net.weights[l]).rowwise() + net.biases[l].transpose();
    if (l + 1 < L) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a.col(0);
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

Eigen::VectorXd MlpNetwork::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != in_mean.size()) throw std::invalid_argument("network input width mismatch");
  return (forward(*this, standardize(x, in_mean, in_sd), nullptr).array() * out_sd + out_mean)
      .matrix();
}

MlpTraining train_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const std::vector<int>& firm, const MlpHyper& hyper) {
  if (x.rows() != y.rows() || static_cast<std::size_t>(x.rows()) != firm.size()) {
    throw std::invalid_argument("train_mlp: inconsistent row counts");
  }
  std::mt19937_64 gen(derive_seed(hyper.seed, 0x6d6c70ULL));

  // Firm-level split.
  const std::set<int> distinct(firm.begin(), firm.end());
  std::vector<int> firms(distinct.begin(), distinct.end());
  std::shuffle(firms.begin(), firms.end(), gen);
  const auto n_val = static_cast<std::size_t>(
      std::max(1.0, std::round(hyper.validation_fraction * static_cast<double>(firms.size()))));
  if (firms.size() < 2 || n_val >= firms.size()) {
    throw TrainingError("need at least two firms for a train/validation split");
  }
  const std::set<int> val_firms(firms.begin(), firms.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Eigen::Index> tr, va;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    (val_firms.count(firm[static_cast<std::size_t>(r)]) ? va : tr).push_back(r);
  }

  const Eigen::MatrixXd xtr = x(tr, Eigen::all), xva = x(va, Eigen::all);
  const Eigen::VectorXd ytr = y(tr), yva = y(va);

  MlpTraining out;
  out.hyper = hyper;
  MlpNetwork& net = out.net;
  net.in_mean = xtr.colwise().mean();
  net.in_sd = ((xtr.rowwise() - net.in_mean.transpose()).array().square().colwise().sum() /
               std::max<double>(1.0, static_cast<double>(xtr.rows() - 1)))
                  .sqrt()
                  .matrix()
                  .transpose();
  for (Eigen::Index j = 0; j < net.in_sd.size(); ++j) {
    if (!(net.in_sd(j) > 0.0)) net.in_sd(j) = 1.0;
  }
  net.out_mean = ytr.mean();
  net.out_sd = std::sqrt((ytr.array() - net.out_mean).square().mean());
  if (!(net.out_sd > 0.0)) net.out_sd = 1.0;

  std::vector<int> widths = {static_cast<int>(x.cols())};
  for (int l = 0; l < hyper.layers; ++l) widths.push_back(hyper.hidden);
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double lim = std::sqrt(6.0 / widths[l]);
    std::uniform_real_distribution<double> u(-lim, lim);
    Eigen::MatrixXd w(widths[l], widths[l + 1]);
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = u(gen);
    net.weights.push_back(w);
    net.biases.push_back(Eigen::VectorXd::Zero(widths[l + 1]));
  }

  const Eigen::MatrixXd xs = standardize(xtr, net.in_mean, net.in_sd);
  const Eigen::MatrixXd xvs = standardize(xva, net.in_mean, net.in_sd);
  const Eigen::VectorXd ys = ((ytr.array() - net.out_mean) / net.out_sd).matrix();
  auto val_mse = [&](const MlpNetwork& n) {
    return mse((forward(n, xvs, nullptr).array() * n.out_sd + n.out_mean).matrix(), yva);
  };

  out.initial_validation_mse = val_mse(net);
  double best = out.initial_validation_mse;
  MlpNetwork best_net = net;
  int since_best = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(xs.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<Eigen::MatrixXd> acts;
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(hyper.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
                                          order.begin() + static_cast<std::ptrdiff_t>(e));
      const Eigen::MatrixXd xb = xs(idx, Eigen::all);
      const Eigen::VectorXd pred = forward(net, xb, &acts);
      const double bn = static_cast<double>(idx.size());
      // d(mean squared error)/d(output)
      Eigen::MatrixXd delta = (2.0 / bn) * (pred - ys(idx));
      for (std::size_t l = net.weights.size(); l-- > 0;) {
        const Eigen::MatrixXd gw = acts[l].transpose() * delta;
        const Eigen::VectorXd gb = delta.colwise().sum().transpose();
        if (l > 0) {
          delta = (delta * net.weights[l].transpose()).cwiseProduct(
              (acts[l].array() > 0.0).cast<double>().matrix());
        }
        net.weights[l] -= hyper.learning_rate * gw;
        net.biases[l] -= hyper.learning_rate * gb;
      }
    }
    const double v = val_mse(net);
    out.validation_history.push_back(v);
    out.epochs = epoch + 1;
    if (!std::isfinite(v) || v > 10.0 * out.initial_validation_mse) {
      throw TrainingError("network training diverged (validation MSE " + std::to_string(v) + ")");
    }
    if (v < best) {
      best = v;
      best_net = net;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  out.net = best_net;
  out.best_validation_mse = best;
  return out;
}

}  // namespace prodfn
