#pragma once

// Trajectory library file:
//   line 1      JSON header terminated by '\n'
//   records     u32 byte length of the rest of the record, f64 delta,
//               u32 trajectory index, u32 n_clicks, n_clicks x f64 times,
//               f64 cached total time (NaN when fewer than N clicks),
//               u32 bin count, bin count x u32 histogram counts, u32 overflow
//   trailer     8-byte marker "QJAEND01", u64 record count, u32 number of
//               incomplete grid points, that many u32 point indices,
//               u32 CRC-32 of every preceding byte
// All integers and floats are little-endian.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qja/exact_inference.hpp"
#include "qja/statistics.hpp"
#include "qja/system_models.hpp"
#include "qja/trajectory.hpp"

namespace qja {

struct StatConfig {
  std::size_t total_time_n = 200;
  double bin_width = 0.25;
  double tau_max = 8.0;
};

struct LibraryHeader {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  // Fixed parameters; the detuning of `system` is ignored.
  SystemConfig system;
  double grid_min = 0.0;
  double grid_max = 10.0;
  int grid_points = 101;
  std::size_t per_point_count = 2000;
  StopRule stop = StopRule::clicks(200);
  std::uint64_t master_seed = 0;
  StatConfig stats;

  ParameterGrid grid() const { return ParameterGrid::uniform(grid_min, grid_max, grid_points); }
  void validate() const;
  nlohmann::json to_json() const;
  static LibraryHeader from_json(const nlohmann::json& j);
};

struct LibraryRecord {
  double delta = 0.0;
  std::uint32_t trajectory_index = 0;
  // Empty when loaded without clicks.
  ClickPattern clicks;
  std::uint32_t n_clicks = 0;
  double total_time = 0.0;
  std::vector<std::uint32_t> hist_counts;
  std::uint32_t hist_overflow = 0;

  WaitingHistogram histogram(const StatConfig& cfg) const;
};

// Cached statistics of a click pattern under `cfg`.
LibraryRecord make_record(double delta, std::uint32_t trajectory_index, ClickPattern clicks, const StatConfig& cfg);

struct GenerationReport {
  std::size_t records = 0;
  std::vector<std::uint32_t> incomplete_points;
  std::vector<std::string> errors;
};

// Simulates per_point_count trajectories at each grid detuning with seeds
// (master_seed, point * per_point_count + k) and writes them in that order.
// Refuses to overwrite an existing file.
GenerationReport generate_library(const LibraryHeader& header, const std::string& path, int workers);

struct LoadOptions {
  bool keep_clicks = true;
  // Fraction of records whose cached statistics are recomputed on load.
  double verify_fraction = 0.01;
};

class LibraryIndex {
 public:
  LibraryIndex(LibraryHeader header, std::vector<LibraryRecord> records, std::vector<std::uint32_t> incomplete);

  const LibraryHeader& header() const noexcept { return header_; }
  const ParameterGrid& grid() const noexcept { return grid_; }
  const std::vector<LibraryRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<std::uint32_t>& incomplete_points() const noexcept { return incomplete_; }
  // Grid-point index of every record.
  std::uint32_t point_of(std::size_t record) const { return point_[record]; }

  // Records at a grid detuning; NotOnGrid error for any other value.
  std::span<const LibraryRecord> query(double delta) const;

 private:
  LibraryHeader header_;
  ParameterGrid grid_;
  std::vector<LibraryRecord> records_;
  std::vector<std::uint32_t> point_;
  std::vector<std::size_t> begin_;
  std::vector<std::uint32_t> incomplete_;
};

// VersionMismatch, Checksum and CorruptFile (with byte offset) errors.
LibraryIndex load_library(const std::string& path, const LoadOptions& opts = {});

// Uniform draws over all records for one inference run: without
// replacement by default (Exhausted error once every record is used).
class LibrarySampler {
 public:
  LibrarySampler(const LibraryIndex& index, std::uint64_t seed, bool with_replacement = false);

  std::size_t next_index();
  const LibraryRecord& next() { return index_.records()[next_index()]; }
  std::size_t remaining() const noexcept;

 private:
  const LibraryIndex& index_;
  std::mt19937_64 rng_;
  bool with_replacement_;
  std::vector<std::uint32_t> perm_;
  std::size_t used_ = 0;
};

}  // namespace qja
