#include "prodfn/panel_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace prodfn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void append_num(std::string& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

}  // namespace

bool CsvTable::has(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

const std::vector<double>& CsvTable::col(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError("missing column '" + name + "'");
  return columns[static_cast<std::size_t>(it - header.begin())];
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  t.header = split(line, ',');
  t.columns.assign(t.header.size(), {});
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != t.header.size()) {
      throw SchemaError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      char* end = nullptr;
      const double x = std::strtod(cells[j].c_str(), &end);
      if (cells[j].empty() || end != cells[j].c_str() + cells[j].size()) {
        throw SchemaError(path + ":" + std::to_string(lineno) + ": non-numeric value '" +
                          cells[j] + "' in column " + t.header[j]);
      }
      t.columns[j].push_back(x);
    }
  }
  return t;
}

std::map<std::string, std::string> parse_column_map(const std::string& spec) {
  std::map<std::string, std::string> out;
  for (const auto& item : split(spec, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw SchemaError("bad column mapping '" + item + "'");
    out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string panel_to_csv(const FirmPanel& panel, bool include_latent) {
  if (include_latent && !panel.has_latent) {
    throw SchemaError("panel carries no latent variables");
  }
  std::string out = "firm_id,period,q,k,k_next,v,p,pV,pK";
  if (include_latent) out += ",omega,epsilon,q_star,delta1,delta2";
  out += '\n';
  out.reserve(panel.rows() * (include_latent ? 300 : 180));
  for (int i = 0; i < panel.n_firms; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    for (int t = 0; t < panel.n_periods; ++t) {
      const std::size_t r = panel.index(i, t);
      out += std::to_string(i);
      out += ',';
      out += std::to_string(t);
      for (double x : {panel.q[r], panel.k[r], panel.k_next[r], panel.v[r], panel.p[r],
                       panel.pV[ii], panel.pK[ii]}) {
        out += ',';
        append_num(out, x);
      }
      if (include_latent) {
        for (double x : {panel.omega[r], panel.epsilon[r], panel.q_star[r], panel.delta1[ii],
                         panel.delta2[ii]}) {
          out += ',';
          append_num(out, x);
        }
      }
      out += '\n';
    }
  }
  return out;
}

void write_panel_csv(const FirmPanel& panel, const std::string& path, bool include_latent) {
  write_file_atomic(path, panel_to_csv(panel, include_latent));
}

void write_panel_sidecar(const FirmPanel& panel, const DgpConfig& cfg, const std::string& path) {
  nlohmann::ordered_json j;
  j["config_hash"] = panel.config_hash;
  j["seed"] = panel.seed;
  j["n_firms"] = panel.n_firms;
  j["n_periods"] = panel.n_periods;
  j["config"] = cfg.canonical();
  write_file_atomic(path, j.dump(2) + "\n");
}

FirmPanel panel_from_table(const CsvTable& table, const std::map<std::string, std::string>& map) {
  auto name = [&](const std::string& c) {
    const auto it = map.find(c);
    return it == map.end() ? c : it->second;
  };
  const auto& firm = table.col(name("firm_id"));
  const auto& period = table.col(name("period"));
  const std::size_t n = table.rows();
  if (n == 0) throw SchemaError("panel has no rows");

  // Sort rows by (firm, period) and check balance.
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < n; ++r) order[r] = r;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return firm[a] != firm[b] ? firm[a] < firm[b] : period[a] < period[b];
  });
  int n_firms = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == 0 || firm[order[j]] != firm[order[j - 1]]) ++n_firms;
  }
  if (n % static_cast<std::size_t>(n_firms) != 0) {
    throw SchemaError("panel is unbalanced; simulator-schema panels need T rows per firm");
  }
  const int T = static_cast<int>(n / static_cast<std::size_t>(n_firms));
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t start = j - j % static_cast<std::size_t>(T);
    if (firm[order[j]] != firm[order[start]] ||
        (j > start && period[order[j]] != period[order[j - 1]] + 1.0)) {
      throw SchemaError("panel is unbalanced or has gaps in period");
    }
  }

  FirmPanel p;
  p.resize(n_firms, T);
  const std::vector<std::pair<std::string, std::vector<double>*>> rows = {
      {"q", &p.q}, {"k", &p.k}, {"k_next", &p.k_next}, {"v", &p.v}, {"p", &p.p}};
  for (const auto& [c, dst] : rows) {
    const auto& src = table.col(name(c));
    for (std::size_t j = 0; j < n; ++j) (*dst)[j] = src[order[j]];
  }
  const auto& pV = table.col(name("pV"));
  const auto& pK = table.col(name("pK"));
  for (int i = 0; i < n_firms; ++i) {
    const std::size_t r0 = order[static_cast<std::size_t>(i) * T];
    p.pV[static_cast<std::size_t>(i)] = pV[r0];
    p.pK[static_cast<std::size_t>(i)] = pK[r0];
  }
  const std::vector<std::string> latent = {"omega", "epsilon", "q_star", "delta1", "delta2"};
  p.has_latent = std::all_of(latent.begin(), latent.end(),
                             [&](const std::string& c) { return table.has(name(c)); });
  if (p.has_latent) {
    for (const auto& [c, dst] : std::vector<std::pair<std::string, std::vector<double>*>>{
             {"omega", &p.omega}, {"epsilon", &p.epsilon}, {"q_star", &p.q_star}}) {
      const auto& src = table.col(name(c));
      for (std::size_t j = 0; j < n; ++j) (*dst)[j] = src[order[j]];
    }
    const auto& d1 = table.col(name("delta1"));
    const auto& d2 = table.col(name("delta2"));
    for (int i = 0; i < n_firms; ++i) {
      const std::size_t r0 = order[static_cast<std::size_t>(i) * T];
      p.delta1[static_cast<std::size_t>(i)] = d1[r0];
      p.delta2[static_cast<std::size_t>(i)] = d2[r0];
    }
  }
  return p;
}

FirmPanel read_panel_csv(const std::string& path, const std::map<std::string, std::string>& map) {
  return panel_from_table(read_csv(path), map);
}

}  // namespace prodfn
