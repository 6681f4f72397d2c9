#include "prodfn/basis.hpp"

#include <cmath>
#include <functional>

namespace prodfn {

Eigen::Index NamedColumns::find(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

double hermite_univariate(double x, int n) {
  if (n < 0) throw std::invalid_argument("Hermite order must be >= 0");
  if (n == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int j = 1; j < n; ++j) {
    const double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

std::vector<std::vector<int>> multi_indices(int d, int degree) {
  if (d < 0 || degree < 0) throw std::invalid_argument("multi_indices needs d, degree >= 0");
  std::vector<std::vector<int>> out;
  std::vector<int> a(static_cast<std::size_t>(d), 0);
  // Exponent vectors of total degree s, first variable's exponent largest first.
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == d - 1) {
      a[static_cast<std::size_t>(pos)] = left;
      out.push_back(a);
      return;
    }
    for (int e = left; e >= 0; --e) {
      a[static_cast<std::size_t>(pos)] = e;
      rec(pos + 1, left - e);
    }
  };
  for (int s = 0; s <= degree; ++s) {
    if (d == 0) {
      if (s == 0) out.emplace_back();
      continue;
    }
    rec(0, s);
  }
  return out;
}

std::size_t basis_size(int d, int degree) {
  // C(d + degree, degree)
  std::size_t c = 1;
  for (int j = 1; j <= degree; ++j) {
    c = c * static_cast<std::size_t>(d + j) / static_cast<std::size_t>(j);
  }
  return c;
}

std::vector<std::string> BasisSpec::term_labels() const {
  std::vector<std::string> out;
  for (const auto& a : multi_indices(static_cast<int>(variable_names.size()), total_degree)) {
    std::string label;
    for (std::size_t m = 0; m < a.size(); ++m) {
      if (a[m] == 0) continue;
      if (!label.empty()) label += "*";
      label += "He" + std::to_string(a[m]) + "(" + variable_names[m] + ")";
    }
    out.push_back(label.empty() ? "1" : label);
  }
  return out;
}

namespace {

std::vector<Eigen::Index> resolve(const NamedColumns& data, const BasisSpec& spec) {
  std::vector<Eigen::Index> idx;
  for (const auto& name : spec.variable_names) {
    const Eigen::Index j = data.find(name);
    if (j < 0) throw std::invalid_argument("schema error: missing variable '" + name + "'");
    idx.push_back(j);
  }
  return idx;
}

Eigen::MatrixXd design(const NamedColumns& data, const BasisSpec& spec,
                       const std::vector<Eigen::Index>& idx) {
  const Eigen::Index n = data.data.rows();
  const int d = static_cast<int>(idx.size());
  const int D = spec.total_degree;
  // He_0..He_D of every standardized variable.
  std::vector<Eigen::MatrixXd> he(static_cast<std::size_t>(d));
  for (int m = 0; m < d; ++m) {
    const auto mm = static_cast<std::size_t>(m);
    Eigen::ArrayXd x = (data.data.col(idx[mm]).array() - spec.mean[mm]) / spec.sd[mm];
    Eigen::MatrixXd& H = he[mm];
    H.resize(n, D + 1);
    H.col(0).setOnes();
    if (D >= 1) H.col(1) = x.matrix();
    for (int j = 1; j < D; ++j) {
      H.col(j + 1) = (x * H.col(j).array() - j * H.col(j - 1).array()).matrix();
    }
  }
  const auto terms = multi_indices(d, D);
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms.size()));
  for (std::size_t c = 0; c < terms.size(); ++c) {
    Eigen::ArrayXd col = Eigen::ArrayXd::Ones(n);
    for (int m = 0; m < d; ++m) {
      const int e = terms[c][static_cast<std::size_t>(m)];
      if (e > 0) col *= he[static_cast<std::size_t>(m)].col(e).array();
    }
    out.col(static_cast<Eigen::Index>(c)) = col.matrix();
  }
  return out;
}

}  // namespace

Eigen::MatrixXd build_design(const NamedColumns& data, BasisSpec& spec) {
  if (spec.total_degree < 0) throw std::invalid_argument("total degree must be >= 0");
  const auto idx = resolve(data, spec);
  if (!spec.standardized()) {
    const Eigen::Index n = data.data.rows();
    if (n < 2) throw StandardizationError("standardization needs at least two observations");
    spec.mean.clear();
    spec.sd.clear();
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const auto col = data.data.col(idx[m]);
      const double mu = col.mean();
      const double var = (col.array() - mu).square().sum() / static_cast<double>(n - 1);
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
        spec.mean.clear();
        spec.sd.clear();
        throw StandardizationError("variable '" + spec.variable_names[m] + "' has zero variance");
      }
      spec.mean.push_back(mu);
      spec.sd.push_back(sd);
    }
  }
  return design(data, spec, idx);
}

Eigen::MatrixXd build_design(const NamedColumns& data, const BasisSpec& spec) {
  if (!spec.standardized()) {
    throw StandardizationError("basis standardization has not been fitted");
  }
  return design(data, spec, resolve(data, spec));
}

}  // namespace prodfn
