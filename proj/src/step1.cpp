#include "prodfn/step1.hpp"

#include <json.hpp>
#include <stdexcept>

#include "prodfn/linalg.hpp"

namespace prodfn {

std::vector<std::string> observable_names(int case_id) {
  switch (case_id) {
    case 1:
      return {"k", "v", "pV"};
    case 2:
      return {"k_next", "k", "v", "pV"};
    case 3:
      return {"k_next", "k", "v", "pV", "p"};
    default:
      throw std::invalid_argument("observables case must be 1, 2 or 3");
  }
}

NamedColumns make_observables(const FirmPanel& panel, int case_id,
                              const std::vector<std::size_t>& rows) {
  NamedColumns out;
  out.names = observable_names(case_id);
  out.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.names.size()));
  const auto T = static_cast<std::size_t>(panel.n_periods);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const std::size_t r = rows[j];
    if (r >= panel.rows()) throw std::out_of_range("panel row out of range");
    const std::size_t i = r / T;
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t c = 0; c < out.names.size(); ++c) {
      const std::string& n = out.names[c];
      double x = 0.0;
      if (n == "k") x = panel.k[r];
      else if (n == "k_next") x = panel.k_next[r];
      else if (n == "v") x = panel.v[r];
      else if (n == "p") x = panel.p[r];
      else x = panel.pV[i];
      out.data(jj, static_cast<Eigen::Index>(c)) = x;
    }
  }
  return out;
}

NamedColumns make_observables(const FirmPanel& panel, int case_id, int t) {
  if (t < 0 || t >= panel.n_periods) {
    throw std::out_of_range("period " + std::to_string(t) + " is outside 0.." +
                            std::to_string(panel.n_periods - 1));
  }
  std::vector<std::size_t> rows;
  for (int i = 0; i < panel.n_firms; ++i) rows.push_back(panel.index(i, t));
  return make_observables(panel, case_id, rows);
}

EstimationRows estimation_rows(const FirmPanel& panel) {
  EstimationRows e;
  e.n_firms = panel.n_firms;
  e.firm_start.push_back(0);
  for (int i = 0; i < panel.n_firms; ++i) {
    for (int t = 1; t < panel.n_periods; ++t) {
      e.cur.push_back(panel.index(i, t));
      e.lag.push_back(panel.index(i, t - 1));
      e.firm.push_back(i);
    }
    e.firm_start.push_back(static_cast<Eigen::Index>(e.cur.size()));
  }
  return e;
}

std::vector<std::size_t> step1_rows(const FirmPanel& panel, Orientation orientation) {
  const EstimationRows e = estimation_rows(panel);
  return orientation == Orientation::Lagged ? e.lag : e.cur;
}

Step1Fit fit_ols_on(const FirmPanel& panel, int case_id, const std::vector<std::size_t>& rows,
                    int degree) {
  Step1Fit fit;
  fit.kind = Step1Kind::Ols;
  fit.case_id = case_id;
  fit.basis.variable_names = observable_names(case_id);
  fit.basis.total_degree = degree;
  fit.fit_rows = rows;
  const NamedColumns x = make_observables(panel, case_id, rows);
  const Eigen::MatrixXd r = build_design(x, fit.basis);
  Eigen::VectorXd q(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) q(static_cast<Eigen::Index>(j)) = panel.q[rows[j]];
  LeastSquares ls = least_squares(r, q);
  fit.tau = ls.coef;
  fit.rank = ls.rank;
  fit.condition = ls.condition;
  fit.warnings = ls.warnings;
  fit.fitted = r * fit.tau;
  fit.residuals = q - fit.fitted;
  return fit;
}

Step1Fit fit_ols(const FirmPanel& panel, int case_id, int degree, Orientation orientation) {
  Step1Fit fit = fit_ols_on(panel, case_id, step1_rows(panel, orientation), degree);
  fit.orientation = orientation;
  return fit;
}

Step1Fit fit_mlp(const FirmPanel& panel, int case_id, const MlpHyper& hyper,
                 Orientation orientation) {
  Step1Fit fit;
  fit.kind = Step1Kind::Mlp;
  fit.case_id = case_id;
  fit.orientation = orientation;
  fit.basis.variable_names = observable_names(case_id);
  fit.fit_rows = step1_rows(panel, orientation);
  const NamedColumns x = make_observables(panel, case_id, fit.fit_rows);
  Eigen::VectorXd q(static_cast<Eigen::Index>(fit.fit_rows.size()));
  std::vector<int> firm(fit.fit_rows.size());
  for (std::size_t j = 0; j < fit.fit_rows.size(); ++j) {
    q(static_cast<Eigen::Index>(j)) = panel.q[fit.fit_rows[j]];
    firm[j] = static_cast<int>(fit.fit_rows[j] / static_cast<std::size_t>(panel.n_periods));
  }
  MlpTraining tr = train_mlp(x.data, q, firm, hyper);
  fit.net = std::make_shared<const MlpNetwork>(std::move(tr.net));
  fit.validation_mse = tr.best_validation_mse;
  fit.epochs = tr.epochs;
  fit.fitted = fit.net->predict(x.data);
  fit.residuals = q - fit.fitted;
  return fit;
}

namespace {

NamedColumns select(const Step1Fit& fit, const NamedColumns& x) {
  NamedColumns out;
  out.names = fit.basis.variable_names;
  out.data.resize(x.data.rows(), static_cast<Eigen::Index>(out.names.size()));
  for (std::size_t c = 0; c < out.names.size(); ++c) {
    const Eigen::Index j = x.find(out.names[c]);
    if (j < 0) throw std::invalid_argument("schema error: missing variable '" + out.names[c] + "'");
    out.data.col(static_cast<Eigen::Index>(c)) = x.data.col(j);
  }
  return out;
}

}  // namespace

Eigen::MatrixXd step1_design(const Step1Fit& fit, const NamedColumns& x) {
  if (fit.kind != Step1Kind::Ols) throw std::invalid_argument("step-1 design needs an OLS fit");
  return build_design(x, static_cast<const BasisSpec&>(fit.basis));
}

Eigen::VectorXd predict(const Step1Fit& fit, const NamedColumns& x) {
  if (fit.kind == Step1Kind::Ols) return step1_design(fit, x) * fit.tau;
  return fit.net->predict(select(fit, x).data);
}

std::string Step1Fit::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = kind == Step1Kind::Ols ? "ols" : "mlp";
  j["case"] = case_id;
  j["orientation"] = orientation == Orientation::Lagged ? "lagged" : "current";
  j["variables"] = basis.variable_names;
  j["n_obs"] = fit_rows.size();
  j["residual_mse"] = residuals.size() ? residuals.squaredNorm() / residuals.size() : 0.0;
  if (kind == Step1Kind::Ols) {
    j["total_degree"] = basis.total_degree;
    j["standardization_mean"] = basis.mean;
    j["standardization_sd"] = basis.sd;
    j["terms"] = basis.term_labels();
    j["coefficients"] = std::vector<double>(tau.data(), tau.data() + tau.size());
    j["rank"] = rank;
    j["condition"] = condition;
  } else {
    j["validation_mse"] = validation_mse;
    j["epochs"] = epochs;
  }
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace prodfn
