#pragma once

#include <map>
#include <string>
#include <vector>

#include "prodfn/dgp.hpp"

namespace prodfn {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric CSV held column-wise.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  bool has(const std::string& name) const;
  const std::vector<double>& col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// "q=output,k=capital" -> {q: output, k: capital}
std::map<std::string, std::string> parse_column_map(const std::string& spec);

// Writes to path.tmp and renames, so a crash never leaves a truncated file behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string panel_to_csv(const FirmPanel& panel, bool include_latent);
void write_panel_csv(const FirmPanel& panel, const std::string& path, bool include_latent);
// JSON sidecar with config hash, seed and dimensions.
void write_panel_sidecar(const FirmPanel& panel, const DgpConfig& cfg, const std::string& path);

// Rebuilds a balanced panel from a simulator-schema table. Column names go through
// `map` (canonical -> file name) when given. Latent columns are read when all present.
FirmPanel panel_from_table(const CsvTable& table, const std::map<std::string, std::string>& map = {});
FirmPanel read_panel_csv(const std::string& path, const std::map<std::string, std::string>& map = {});

}  // namespace prodfn
