#include "prodfn/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <sstream>

namespace prodfn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
    throw ConfigError("key '" + key + "': expected a finite number, got '" + v + "'");
  }
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

struct Field {
  const char* key;
  Setter set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DBL(KEY, MEMBER)                                                                     \
  Field {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.MEMBER); }                              \
  }
#define INT(KEY, MEMBER)                                                                     \
  Field {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
      c.MEMBER = static_cast<decltype(c.MEMBER)>(to_int(k, v)); },                           \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                   \
  }
#define BOOL(KEY, MEMBER)                                                                    \
  Field {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DBL("alpha", dgp.model.alpha),
      DBL("rho", dgp.model.rho),
      DBL("nu", dgp.model.nu),
      DBL("mean_omega", dgp.targets.mean),
      DBL("var_omega", dgp.targets.var),
      DBL("corr_omega", dgp.targets.corr),
      DBL("alpha_omega", dgp.alpha_omega),
      DBL("mu_d1", dgp.demand.mu_d1),
      DBL("var_d1", dgp.demand.var_d1),
      DBL("mu_d2", dgp.demand.mu_d2),
      DBL("var_d2", dgp.demand.var_d2),
      DBL("mu_pK", dgp.prices.mu_pK),
      DBL("var_pK", dgp.prices.var_pK),
      DBL("mu_pV", dgp.prices.mu_pV),
      DBL("var_pV", dgp.prices.var_pV),
      DBL("sigma2_eps", dgp.sigma2_eps),
      INT("n_firms", dgp.n_firms),
      INT("n_periods", dgp.n_periods),
      INT("burn_in", dgp.burn_in),
      INT("replications", replications),
      Field{"cases",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.cases.clear();
              for (const auto& s : split_list(v)) c.cases.push_back(static_cast<int>(to_int(k, s)));
            },
            [](const ExperimentConfig& c) {
              std::string s;
              for (int x : c.cases) s += (s.empty() ? "" : ",") + std::to_string(x);
              return s;
            }},
      Field{"moments",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.moments.clear();
              for (const auto& s : split_list(v)) {
                if (s == "original") c.moments.push_back(MomentKind::Original);
                else if (s == "modified") c.moments.push_back(MomentKind::Modified);
                else throw ConfigError("key '" + k + "': unknown moment kind '" + s + "'");
              }
            },
            [](const ExperimentConfig& c) {
              std::string s;
              for (MomentKind m : c.moments) s += (s.empty() ? "" : ",") + std::string(moment_kind_name(m));
              return s;
            }},
      Field{"step1",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "ols") c.step1 = Step1Kind::Ols;
              else if (v == "mlp") c.step1 = Step1Kind::Mlp;
              else throw ConfigError("key '" + k + "': expected ols or mlp, got '" + v + "'");
            },
            [](const ExperimentConfig& c) { return std::string(c.step1 == Step1Kind::Ols ? "ols" : "mlp"); }},
      Field{"orientation",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "lagged") c.orientation = Orientation::Lagged;
              else if (v == "current") c.orientation = Orientation::Current;
              else throw ConfigError("key '" + k + "': expected lagged or current, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.orientation == Orientation::Lagged ? "lagged" : "current");
            }},
      INT("step1_degree", step1_degree),
      INT("instrument_degree", instrument_degree),
      BOOL("lm_test", lm_test),
      BOOL("sensitivity", sensitivity),
      BOOL("invertibility", invertibility),
      INT("invertibility_degree", invertibility_degree),
      Field{"invertibility_vars",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.invertibility_vars = split_list(v); },
            [](const ExperimentConfig& c) {
              std::string s;
              for (const auto& x : c.invertibility_vars) s += (s.empty() ? "" : ",") + x;
              return s;
            }},
      INT("calibration_length", calibration_length),
      INT("gmm_restarts", gmm_restarts),
      Field{"output_dir",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
            [](const ExperimentConfig& c) { return c.output_dir; }},
      Field{"seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              char* end = nullptr;
              const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
              if (v.empty() || end != v.c_str() + v.size() || v[0] == '-') {
                throw ConfigError("key '" + k + "': expected an unsigned integer, got '" + v + "'");
              }
              c.seed = x;
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
  };
  return f;
}

#undef DBL
#undef INT
#undef BOOL

ExperimentConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  ExperimentConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  std::vector<std::string> errors;
  for (const auto& [k, v] : pairs) {
    if (k != "preset") continue;
    if (v == "baseline") cfg.dgp = baseline_config();
    else if (v == "modified") cfg.dgp = modified_config();
    else errors.push_back("key 'preset': expected baseline or modified, got '" + v + "'");
  }
  std::map<std::string, int> seen;
  for (const auto& [k, v] : pairs) {
    if (k == "preset") continue;
    if (++seen[k] > 1) {
      errors.push_back("key '" + k + "' given more than once");
      continue;
    }
    const auto it = by_key.find(k);
    if (it == by_key.end()) {
      errors.push_back("unknown key '" + k + "'");
      continue;
    }
    try {
      it->second->set(cfg, k, v);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  if (errors.empty()) {
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> k = {"preset"};
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  try {
    dgp.validate();
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  if (replications < 1) errors.push_back("replications must be >= 1");
  if (cases.empty()) errors.push_back("cases must not be empty");
  for (int c : cases) {
    if (c < 1 || c > 3) errors.push_back("cases must be drawn from 1, 2, 3");
  }
  if (moments.empty()) errors.push_back("moments must not be empty");
  if (step1_degree < 0 || step1_degree > 8) errors.push_back("step1_degree must lie in 0..8");
  if (instrument_degree < 0 || instrument_degree > 8) errors.push_back("instrument_degree must lie in 0..8");
  if (invertibility_degree < 0 || invertibility_degree > 8) errors.push_back("invertibility_degree must lie in 0..8");
  if (invertibility && invertibility_vars.empty()) errors.push_back("invertibility_vars must not be empty");
  if (calibration_length < 100000) errors.push_back("calibration_length must be >= 100000");
  if (gmm_restarts < 0) errors.push_back("gmm_restarts must be >= 0");
  if (output_dir.empty()) errors.push_back("output_dir must not be empty");
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
    throw ConfigError(msg);
  }
}

void ExperimentConfig::apply_paper_scale() {
  replications = 1000;
  dgp.n_firms = 5000;
  dgp.burn_in = 5000;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::vector<std::string> errors;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return from_pairs(pairs);
}

ExperimentConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid JSON configuration: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("JSON configuration must be an object");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    std::string s;
    if (v.is_string()) {
      s = v.get<std::string>();
    } else if (v.is_boolean()) {
      s = v.get<bool>() ? "true" : "false";
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
      s = v.dump();
    } else if (v.is_number_float()) {
      s = fmt(v.get<double>());
    } else if (v.is_array()) {
      for (const auto& e : v) s += (s.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
    } else {
      throw ConfigError("key '" + it.key() + "': unsupported JSON value");
    }
    pairs.emplace_back(it.key(), s);
  }
  return from_pairs(pairs);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return json ? parse_config_json(ss.str()) : parse_config_text(ss.str());
}

}  // namespace prodfn
