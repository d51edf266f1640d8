#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "qja/exact_inference.hpp"
#include "qja/trajectory.hpp"

namespace qja {

inline constexpr const char* kVersion = "1.0.0";

// 17 significant digits, enough to round-trip any double.
std::string format_double(double x);

// Comma-separated table with one header row. Io error on failure.
void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  // Column index by name; Config error if absent.
  std::size_t column(const std::string& name) const;
};

// Lines starting with '#' are skipped.
CsvTable read_csv(const std::string& path);

// Click times in a "time" column preceded by a "# span <value>" line.
void write_clicks_csv(const std::string& path, const ClickPattern& d);
ClickPattern read_clicks_csv(const std::string& path);

// Columns delta, density.
void write_posterior_csv(const std::string& path, const Posterior& p);
// Rebuilds a uniform grid with a flat prior from the delta column.
Posterior read_posterior_csv(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// Run record written beside every output as <output>.manifest.json.
struct RunManifest {
  std::string command;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  bool seed_from_entropy = false;
  int workers = 1;
  double wall_time = 0.0;

  nlohmann::json to_json() const;
};

void write_manifest(const std::string& output_path, const RunManifest& m);

}  // namespace qja
