#include "prodfn/invertibility.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "prodfn/basis.hpp"
#include "prodfn/inference.hpp"
#include "prodfn/kernels.hpp"
#include "prodfn/linalg.hpp"

namespace prodfn {

LongPanel long_panel_from_table(const CsvTable& table, const std::map<std::string, std::string>& map) {
  auto name = [&](const std::string& c) {
    const auto it = map.find(c);
    return it == map.end() ? c : it->second;
  };
  LongPanel p;
  p.firm = table.col(name("firm_id"));
  p.period = table.col(name("period"));
  // Canonical names first, so a mapped column is addressable by its canonical name.
  std::map<std::string, std::string> reverse;
  for (const auto& [canon, file] : map) reverse[file] = canon;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const auto it = reverse.find(table.header[j]);
    p.columns[it == reverse.end() ? table.header[j] : it->second] = table.columns[j];
  }
  return p;
}

LongPanel long_panel_from_panel(const FirmPanel& panel) {
  LongPanel p;
  const std::size_t n = panel.rows();
  p.firm.resize(n);
  p.period.resize(n);
  for (const char* c : {"q", "k", "k_next", "v", "p", "pV", "pK"}) p.columns[c].resize(n);
  for (int i = 0; i < panel.n_firms; ++i) {
    for (int t = 0; t < panel.n_periods; ++t) {
      const std::size_t r = panel.index(i, t);
      p.firm[r] = i;
      p.period[r] = t;
      p.columns["q"][r] = panel.q[r];
      p.columns["k"][r] = panel.k[r];
      p.columns["k_next"][r] = panel.k_next[r];
      p.columns["v"][r] = panel.v[r];
      p.columns["p"][r] = panel.p[r];
      p.columns["pV"][r] = panel.pV[static_cast<std::size_t>(i)];
      p.columns["pK"][r] = panel.pK[static_cast<std::size_t>(i)];
    }
  }
  return p;
}

Eigen::MatrixXd clustered_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& e,
                                     const std::vector<long>& cluster,
                                     std::vector<std::string>* warnings) {
  if (x.rows() != e.rows() || static_cast<std::size_t>(x.rows()) != cluster.size()) {
    throw std::invalid_argument("clustered_covariance: inconsistent row counts");
  }
  if (x.rows() == 0) throw std::invalid_argument("clustered_covariance: no observations");
  std::unordered_map<long, Eigen::Index> id;
  for (long c : cluster) id.emplace(c, static_cast<Eigen::Index>(id.size()));
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(id.size()), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    scores.row(id[cluster[static_cast<std::size_t>(r)]]) += e(r) * x.row(r);
  }
  const Eigen::MatrixXd meat = kernels::gram(scores);
  const PseudoInverse bread = pseudo_inverse_sym(kernels::gram(x), 1e-12);
  if (bread.truncated && warnings) {
    warnings->push_back("X^T X is singular; clustered covariance uses its pseudo-inverse");
  }
  return bread.inverse * meat * bread.inverse;
}

namespace {

// Relative residual norm of column y after projection on the columns of a.
double residual_fraction(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  const double ny = y.norm();
  if (ny == 0.0) return 0.0;
  if (a.cols() == 0) return 1.0;
  const Eigen::VectorXd b = a.colPivHouseholderQr().solve(y);
  return (y - a * b).norm() / ny;
}

}  // namespace

InvertTestResult test_mean_independence(const LongPanel& panel, const InvertTestOptions& opts) {
  InvertTestResult res;
  if (opts.x_vars.empty()) throw std::invalid_argument("invertibility test needs at least one x variable");
  auto column = [&](const std::string& n) -> const std::vector<double>& {
    const auto it = panel.columns.find(n);
    if (it == panel.columns.end()) throw SchemaError("missing column '" + n + "'");
    return it->second;
  };
  const auto& y_all = column(opts.outcome);
  std::vector<const std::vector<double>*> xs;
  for (const auto& v : opts.x_vars) xs.push_back(&column(v));

  // Pair each row with its previous period within firm.
  std::vector<std::size_t> order(panel.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return panel.firm[a] != panel.firm[b] ? panel.firm[a] < panel.firm[b]
                                          : panel.period[a] < panel.period[b];
  });
  std::vector<std::size_t> cur, lag;
  for (std::size_t j = 1; j < order.size(); ++j) {
    const std::size_t a = order[j - 1], b = order[j];
    if (panel.firm[a] == panel.firm[b] && panel.period[b] == panel.period[a] + 1.0) {
      cur.push_back(b);
      lag.push_back(a);
    }
  }
  const auto n = static_cast<Eigen::Index>(cur.size());
  const auto d = static_cast<Eigen::Index>(xs.size());
  if (n <= d + 1) throw std::invalid_argument("too few rows with an observed previous period");

  NamedColumns xt;
  xt.names = opts.x_vars;
  xt.data.resize(n, d);
  Eigen::MatrixXd xl(n, d);
  Eigen::VectorXd y(n);
  std::vector<long> cluster(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t c = cur[static_cast<std::size_t>(r)], l = lag[static_cast<std::size_t>(r)];
    for (Eigen::Index m = 0; m < d; ++m) {
      xt.data(r, m) = (*xs[static_cast<std::size_t>(m)])[c];
      xl(r, m) = (*xs[static_cast<std::size_t>(m)])[l];
    }
    y(r) = y_all[c];
    cluster[static_cast<std::size_t>(r)] = std::lround(panel.firm[c]);
  }

  // psi(x_t): drop columns that are constant or exactly collinear (e.g. a time-invariant
  // variable whose standardization fails is dropped from the basis altogether).
  BasisSpec spec;
  for (Eigen::Index m = 0; m < d; ++m) {
    const auto col = xt.data.col(m);
    const double mu = col.mean();
    const double sd = std::sqrt((col.array() - mu).square().sum() / static_cast<double>(n - 1));
    if (sd > 1e-12 * std::max(1.0, std::abs(mu))) {
      spec.variable_names.push_back(opts.x_vars[static_cast<std::size_t>(m)]);
    } else {
      res.warnings.push_back("variable '" + opts.x_vars[static_cast<std::size_t>(m)] +
                             "' is constant on the estimation rows");
    }
  }
  spec.total_degree = opts.degree;
  Eigen::MatrixXd psi = spec.variable_names.empty() ? Eigen::MatrixXd::Ones(n, 1)
                                                    : build_design(xt, spec);
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(psi);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    if (rank < psi.cols()) {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index j = 0; j < rank; ++j) keep.push_back(qr.colsPermutation().indices()(j));
      std::sort(keep.begin(), keep.end());
      res.dropped_psi += static_cast<int>(psi.cols() - rank);
      psi = Eigen::MatrixXd(psi(Eigen::all, keep));
    }
  }

  // Lagged block: keep columns that are not in span(psi, kept lagged columns).
  std::vector<Eigen::Index> beta_keep;
  Eigen::MatrixXd span = psi;
  for (Eigen::Index m = 0; m < d; ++m) {
    if (residual_fraction(span, xl.col(m)) < 1e-9) {
      res.dropped_beta.push_back(opts.x_vars[static_cast<std::size_t>(m)]);
      res.warnings.push_back("lagged '" + opts.x_vars[static_cast<std::size_t>(m)] +
                             "' lies in the span of the flexible block; dropped");
      continue;
    }
    beta_keep.push_back(m);
    span.conservativeResize(Eigen::NoChange, span.cols() + 1);
    span.col(span.cols() - 1) = xl.col(m);
  }
  const auto q = static_cast<Eigen::Index>(beta_keep.size());
  for (Eigen::Index m : beta_keep) res.beta_names.push_back(opts.x_vars[static_cast<std::size_t>(m)]);

  Eigen::MatrixXd x(n, q + psi.cols());
  for (Eigen::Index j = 0; j < q; ++j) x.col(j) = xl.col(beta_keep[static_cast<std::size_t>(j)]);
  x.rightCols(psi.cols()) = psi;

  const LeastSquares ls = least_squares(x, y);
  for (const auto& w : ls.warnings) res.warnings.push_back(w);
  const Eigen::VectorXd e = y - x * ls.coef;
  const Eigen::MatrixXd v = clustered_covariance(x, e, cluster, &res.warnings);

  std::vector<long> distinct = cluster;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  res.n_obs = static_cast<int>(n);
  res.n_firms = static_cast<int>(distinct.size());
  res.n_regressors = static_cast<int>(x.cols());
  const double sst = (y.array() - y.mean()).square().sum();
  res.r_squared = sst > 0.0 ? std::clamp(1.0 - e.squaredNorm() / sst, 0.0, 1.0) : 0.0;

  res.beta_hat = ls.coef.head(q);
  res.beta_cov = v.topLeftCorner(q, q);
  if (q == 0) {
    res.warnings.push_back("no testable lagged regressors remain");
    return res;
  }
  const PseudoInverse vi = pseudo_inverse_sym(res.beta_cov, 1e-12);
  res.wald = std::max(0.0, res.beta_hat.dot(vi.inverse * res.beta_hat));
  res.p_chi2 = chi2_upper_tail(res.wald, vi.rank);
  res.f_stat = vi.rank > 0 ? res.wald / vi.rank : 0.0;
  if (res.n_firms > 1 && vi.rank > 0) {
    boost::math::fisher_f fd(static_cast<double>(vi.rank), static_cast<double>(res.n_firms - 1));
    res.p_f = res.f_stat > 0.0 ? boost::math::cdf(boost::math::complement(fd, res.f_stat)) : 1.0;
  }
  return res;
}

std::string InvertTestResult::to_json() const {
  nlohmann::ordered_json j;
  j["beta_names"] = beta_names;
  j["beta_hat"] = std::vector<double>(beta_hat.data(), beta_hat.data() + beta_hat.size());
  j["wald"] = wald;
  j["f_stat"] = f_stat;
  j["p_chi2"] = p_chi2;
  j["p_f"] = p_f;
  j["r_squared"] = r_squared;
  j["n_obs"] = n_obs;
  j["n_firms"] = n_firms;
  j["n_regressors"] = n_regressors;
  j["dropped_beta"] = dropped_beta;
  j["dropped_psi"] = dropped_psi;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace prodfn
