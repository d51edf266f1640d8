#include "qja/io.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qja/error.hpp"

namespace qja {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw Error(ErrorKind::Io, "write failed on " + path);
}

double parse_number(const std::string& s, const std::string& path) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
  double v = 0.0;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    const std::string t(b, e);
    if (t == "nan") return std::nan("");
    if (t == "inf") return HUGE_VAL;
    if (t == "-inf") return -HUGE_VAL;
    throw Error(ErrorKind::Config, "bad number '" + t + "' in " + path);
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw Error(ErrorKind::InvalidArgument, "CSV row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  finish(out, path);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw Error(ErrorKind::Config, "CSV has no column '" + name + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (!have_header) {
      t.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size()) throw Error(ErrorKind::Config, "ragged CSV row in " + path);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, path));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorKind::Config, "empty CSV " + path);
  return t;
}

void write_clicks_csv(const std::string& path, const ClickPattern& d) {
  auto out = open_out(path);
  out << "# span " << format_double(d.span) << '\n' << "time\n";
  for (double t : d.times) out << format_double(t) << '\n';
  finish(out, path);
}

ClickPattern read_clicks_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string first;
  std::getline(in, first);
  in.close();
  const CsvTable t = read_csv(path);
  const std::size_t col = t.column("time");
  ClickPattern d;
  for (const auto& row : t.rows) d.times.push_back(row[col]);
  d.span = d.times.empty() ? 0.0 : d.times.back();
  if (first.rfind("# span ", 0) == 0) d.span = parse_number(first.substr(7), path);
  d.validate();
  return d;
}

void write_posterior_csv(const std::string& path, const Posterior& p) {
  std::vector<std::vector<double>> rows;
  rows.reserve(p.grid.size());
  for (std::size_t i = 0; i < p.grid.size(); ++i) rows.push_back({p.grid.values[i], p.density[i]});
  write_csv(path, {"delta", "density"}, rows);
}

Posterior read_posterior_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cd = t.column("delta");
  const std::size_t cp = t.column("density");
  if (t.rows.size() < 2) throw Error(ErrorKind::Config, "posterior needs at least two grid points: " + path);
  Posterior p{ParameterGrid::uniform(t.rows.front()[cd], t.rows.back()[cd], static_cast<int>(t.rows.size())), {}};
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (std::abs(t.rows[i][cd] - p.grid.values[i]) > 1e-9 * p.grid.bin_width) {
      throw Error(ErrorKind::Config, "posterior grid in " + path + " is not uniform");
    }
    p.density.push_back(t.rows[i][cp]);
  }
  return p;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},
          {"inputs", inputs},
          {"results", results},
          {"outputs", outputs},
          {"seed", seed},
          {"seed_from_entropy", seed_from_entropy},
          {"workers", workers},
          {"wall_time_s", wall_time},
          {"versions",
           {{"qja", kVersion},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION}}}};
}

void write_manifest(const std::string& output_path, const RunManifest& m) {
  write_json(output_path + ".manifest.json", m.to_json());
}

}  // namespace qja
