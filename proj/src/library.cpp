#include "qja/library.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>

#include <zlib.h>

#include "qja/error.hpp"
#include "qja/parallel.hpp"

namespace qja {

namespace {

constexpr char kTrailerMarker[8] = {'Q', 'J', 'A', 'E', 'N', 'D', '0', '1'};

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& b, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, sizeof v);
  put_u64(b, v);
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const unsigned char* p) {
  const std::uint64_t v = get_u64(p);
  double x;
  std::memcpy(&x, &v, sizeof x);
  return x;
}

std::uint32_t crc_update(std::uint32_t crc, const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::string encode_record(const LibraryRecord& r) {
  std::string body;
  put_f64(body, r.delta);
  put_u32(body, r.trajectory_index);
  put_u32(body, static_cast<std::uint32_t>(r.clicks.times.size()));
  for (double t : r.clicks.times) put_f64(body, t);
  put_f64(body, r.total_time);
  put_u32(body, static_cast<std::uint32_t>(r.hist_counts.size()));
  for (std::uint32_t c : r.hist_counts) put_u32(body, c);
  put_u32(body, r.hist_overflow);
  std::string out;
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  return out + body;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

nlohmann::json stop_to_json(const StopRule& s) {
  return {{"kind", s.kind == StopRule::Kind::ClickCount ? "clicks" : "wall-time"}, {"value", s.value}};
}

StopRule stop_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  StopRule s;
  if (kind == "clicks") {
    s.kind = StopRule::Kind::ClickCount;
  } else if (kind == "wall-time") {
    s.kind = StopRule::Kind::WallTime;
  } else {
    throw Error(ErrorKind::Config, "unknown stop rule '" + kind + "'");
  }
  s.value = j.at("value").get<double>();
  s.validate();
  return s;
}

}  // namespace

void LibraryHeader::validate() const {
  if (schema_version != kSchemaVersion) throw Error(ErrorKind::VersionMismatch, "unsupported library schema");
  if (per_point_count == 0) throw Error(ErrorKind::InvalidArgument, "per_point_count must be positive");
  grid();
  stop.validate();
  if (stats.total_time_n == 0) throw Error(ErrorKind::InvalidArgument, "total-time N must be positive");
  WaitingHistogram::bin_count(stats.bin_width, stats.tau_max);
  if (static_cast<double>(grid_points) * static_cast<double>(per_point_count) > 4294967295.0) {
    throw Error(ErrorKind::InvalidArgument, "library too large for 32-bit trajectory indices");
  }
}

nlohmann::json LibraryHeader::to_json() const {
  nlohmann::json params = system.to_json();
  params.erase("delta");
  params.erase("model");
  return {{"format", "qja-library"},
          {"schema_version", schema_version},
          {"model", to_string(system.kind)},
          {"params", params},
          {"grid", {{"min", grid_min}, {"max", grid_max}, {"points", grid_points}}},
          {"per_point_count", per_point_count},
          {"stop_rule", stop_to_json(stop)},
          {"master_seed", master_seed},
          {"stat_config",
           {{"total_time_n", stats.total_time_n}, {"bin_width", stats.bin_width}, {"tau_max", stats.tau_max}}}};
}

LibraryHeader LibraryHeader::from_json(const nlohmann::json& j) {
  LibraryHeader h;
  try {
    h.schema_version = j.at("schema_version").get<int>();
    if (h.schema_version != kSchemaVersion) {
      throw Error(ErrorKind::VersionMismatch,
                  "library schema " + std::to_string(h.schema_version) + ", expected " +
                      std::to_string(kSchemaVersion));
    }
    nlohmann::json sys = j.at("params");
    sys["model"] = j.at("model");
    h.system = SystemConfig::from_json(sys);
    h.grid_min = j.at("grid").at("min").get<double>();
    h.grid_max = j.at("grid").at("max").get<double>();
    h.grid_points = j.at("grid").at("points").get<int>();
    h.per_point_count = j.at("per_point_count").get<std::size_t>();
    h.stop = stop_from_json(j.at("stop_rule"));
    h.master_seed = j.at("master_seed").get<std::uint64_t>();
    const auto& sc = j.at("stat_config");
    h.stats.total_time_n = sc.at("total_time_n").get<std::size_t>();
    h.stats.bin_width = sc.at("bin_width").get<double>();
    h.stats.tau_max = sc.at("tau_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("library header: ") + e.what());
  }
  h.validate();
  return h;
}

WaitingHistogram LibraryRecord::histogram(const StatConfig& cfg) const {
  WaitingHistogram h;
  h.bin_width = cfg.bin_width;
  h.tau_max = cfg.tau_max;
  h.counts.assign(hist_counts.begin(), hist_counts.end());
  h.overflow = hist_overflow;
  return h;
}

LibraryRecord make_record(double delta, std::uint32_t trajectory_index, ClickPattern clicks, const StatConfig& cfg) {
  LibraryRecord r;
  r.delta = delta;
  r.trajectory_index = trajectory_index;
  r.n_clicks = static_cast<std::uint32_t>(clicks.times.size());
  r.total_time = clicks.times.size() >= cfg.total_time_n ? clicks.times[cfg.total_time_n - 1]
                                                         : std::numeric_limits<double>::quiet_NaN();
  const WaitingHistogram h = waiting_histogram(clicks, cfg.bin_width, cfg.tau_max);
  r.hist_counts.reserve(h.counts.size());
  for (double c : h.counts) r.hist_counts.push_back(static_cast<std::uint32_t>(c));
  r.hist_overflow = static_cast<std::uint32_t>(h.overflow);
  r.clicks = std::move(clicks);
  return r;
}

GenerationReport generate_library(const LibraryHeader& header, const std::string& path, int workers) {
  header.validate();
  if (std::filesystem::exists(path)) throw Error(ErrorKind::Io, "refusing to overwrite existing file " + path);
  const std::string partial = path + ".partial";
  std::ofstream out(partial, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + partial);
  std::uint32_t crc = crc_update(0, nullptr, 0);
  auto emit = [&](const std::string& bytes) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed on " + partial);
    crc = crc_update(crc, bytes.data(), bytes.size());
  };

  emit(header.to_json().dump() + "\n");
  const ParameterGrid grid = header.grid();
  GenerationReport report;
  const std::size_t per = header.per_point_count;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double delta = grid.values[p];
    std::unique_ptr<TrajectorySimulator> sim;
    std::optional<StateVector> init;
    try {
      const SystemConfig cfg = header.system.with_delta(delta);
      sim = std::make_unique<TrajectorySimulator>(cfg.build());
      init.emplace(cfg.initial_state());
    } catch (const Error& e) {
      report.incomplete_points.push_back(static_cast<std::uint32_t>(p));
      report.errors.push_back("point " + std::to_string(p) + ": " + e.what());
      continue;
    }
    std::vector<std::optional<ClickPattern>> results(per);
    std::vector<std::string> errs(per);
    parallel_for(per, workers, [&](std::size_t k) {
      try {
        results[k] = sim->run(*init, header.stop, TrajectorySeed{header.master_seed, p * per + k});
      } catch (const Error& e) {
        errs[k] = e.what();
      }
    });
    bool incomplete = false;
    for (std::size_t k = 0; k < per; ++k) {
      if (!results[k]) {
        if (!incomplete) report.errors.push_back("point " + std::to_string(p) + ": " + errs[k]);
        incomplete = true;
        continue;
      }
      const auto index = static_cast<std::uint32_t>(p * per + k);
      emit(encode_record(make_record(delta, index, std::move(*results[k]), header.stats)));
      ++report.records;
    }
    if (incomplete) report.incomplete_points.push_back(static_cast<std::uint32_t>(p));
  }

  std::string trailer(kTrailerMarker, sizeof kTrailerMarker);
  put_u64(trailer, report.records);
  put_u32(trailer, static_cast<std::uint32_t>(report.incomplete_points.size()));
  for (std::uint32_t p : report.incomplete_points) put_u32(trailer, p);
  emit(trailer);
  std::string tail;
  put_u32(tail, crc);
  out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
  out.close();
  if (!out) throw Error(ErrorKind::Io, "write failed on " + partial);
  std::filesystem::rename(partial, path);
  return report;
}

LibraryIndex::LibraryIndex(LibraryHeader header, std::vector<LibraryRecord> records,
                           std::vector<std::uint32_t> incomplete)
    : header_(std::move(header)),
      grid_(header_.grid()),
      records_(std::move(records)),
      incomplete_(std::move(incomplete)) {
  point_.reserve(records_.size());
  begin_.assign(grid_.size() + 1, 0);
  std::vector<std::size_t> count(grid_.size(), 0);
  std::uint32_t last = 0;
  for (const auto& r : records_) {
    const auto p = static_cast<std::uint32_t>(grid_.index_of(r.delta));
    if (p < last) throw Error(ErrorKind::CorruptFile, "records are not in grid order");
    last = p;
    point_.push_back(p);
    ++count[p];
  }
  for (std::size_t p = 0; p < grid_.size(); ++p) begin_[p + 1] = begin_[p] + count[p];
}

std::span<const LibraryRecord> LibraryIndex::query(double delta) const {
  const std::size_t p = grid_.index_of(delta);
  return std::span<const LibraryRecord>(records_.data() + begin_[p], begin_[p + 1] - begin_[p]);
}

LibraryIndex load_library(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::uint64_t offset = 0;
  std::string head;
  if (!std::getline(in, head) || in.eof()) throw CorruptFileError("missing library header line", 0);
  head.push_back('\n');
  std::uint32_t crc = crc_update(crc_update(0, nullptr, 0), head.data(), head.size());
  offset += head.size();

  nlohmann::json hj;
  try {
    hj = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception&) {
    throw CorruptFileError("unparseable library header", 0);
  }
  if (!hj.is_object() || hj.value("format", "") != "qja-library") {
    throw CorruptFileError("not a trajectory library", 0);
  }
  LibraryHeader header = LibraryHeader::from_json(hj);
  const ParameterGrid grid = header.grid();

  std::mt19937_64 spot(crc);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<LibraryRecord> records;
  std::vector<std::size_t> checks;
  std::vector<std::uint64_t> offsets;
  std::vector<unsigned char> buf;
  auto read_exact = [&](std::size_t n, const char* what, std::uint64_t at) {
    buf.resize(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw CorruptFileError(std::string("truncated ") + what, at);
    crc = crc_update(crc, reinterpret_cast<const char*>(buf.data()), n);
    offset += n;
  };

  for (;;) {
    const std::uint64_t rec_at = offset;
    unsigned char first[8];
    in.read(reinterpret_cast<char*>(first), 4);
    if (in.gcount() == 0) throw CorruptFileError("missing trailer", rec_at);
    if (in.gcount() != 4) throw CorruptFileError("truncated record length", rec_at);
    // The trailer marker begins "QJAE", which as a record length would
    // announce a record of over a gigabyte.
    if (std::memcmp(first, kTrailerMarker, 4) == 0) {
      in.read(reinterpret_cast<char*>(first + 4), 4);
      if (in.gcount() != 4 || std::memcmp(first, kTrailerMarker, 8) != 0) {
        throw CorruptFileError("damaged trailer marker", rec_at);
      }
      crc = crc_update(crc, reinterpret_cast<const char*>(first), 8);
      offset += 8;
      break;
    }
    crc = crc_update(crc, reinterpret_cast<const char*>(first), 4);
    offset += 4;
    const std::uint32_t len = get_u32(first);
    if (len < 28) throw CorruptFileError("record length too small", rec_at);
    read_exact(len, "record", rec_at);
    const unsigned char* p = buf.data();
    LibraryRecord r;
    r.delta = get_f64(p);
    r.trajectory_index = get_u32(p + 8);
    r.n_clicks = get_u32(p + 12);
    const std::uint64_t times_end = 16 + 8ull * r.n_clicks;
    if (times_end + 12 > len) throw CorruptFileError("record shorter than its click count", rec_at);
    r.clicks.times.resize(r.n_clicks);
    for (std::uint32_t i = 0; i < r.n_clicks; ++i) r.clicks.times[i] = get_f64(p + 16 + 8 * i);
    r.clicks.span = header.stop.kind == StopRule::Kind::WallTime
                        ? header.stop.value
                        : (r.n_clicks ? r.clicks.times.back() : 0.0);
    r.total_time = get_f64(p + times_end);
    const std::uint32_t nb = get_u32(p + times_end + 8);
    if (times_end + 12 + 4ull * nb + 4 != len) throw CorruptFileError("record length mismatch", rec_at);
    r.hist_counts.resize(nb);
    for (std::uint32_t i = 0; i < nb; ++i) r.hist_counts[i] = get_u32(p + times_end + 12 + 4 * i);
    r.hist_overflow = get_u32(p + times_end + 12 + 4ull * nb);
    try {
      grid.index_of(r.delta);
    } catch (const Error&) {
      throw CorruptFileError("record detuning is not on the header grid", rec_at);
    }
    if (unif(spot) < opts.verify_fraction) {
      checks.push_back(records.size());
      offsets.push_back(rec_at);
    } else if (!opts.keep_clicks) {
      r.clicks.times = {};
    }
    records.push_back(std::move(r));
  }

  const std::uint64_t trailer_at = offset - 8;
  read_exact(12, "trailer", trailer_at);
  const std::uint64_t count = get_u64(buf.data());
  const std::uint32_t n_inc = get_u32(buf.data() + 8);
  read_exact(4ull * n_inc, "trailer", trailer_at);
  std::vector<std::uint32_t> incomplete(n_inc);
  for (std::uint32_t i = 0; i < n_inc; ++i) incomplete[i] = get_u32(buf.data() + 4 * i);
  const std::uint32_t computed = crc;
  unsigned char tail[4];
  in.read(reinterpret_cast<char*>(tail), 4);
  if (in.gcount() != 4) throw CorruptFileError("truncated checksum", offset);
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptFileError("bytes after the checksum", offset + 4);
  if (get_u32(tail) != computed) throw Error(ErrorKind::Checksum, "library checksum mismatch in " + path);
  if (count != records.size()) throw CorruptFileError("record count disagrees with the trailer", trailer_at);
  // Spot checks run after the checksum so that they only see intact bytes.
  for (std::size_t c = 0; c < checks.size(); ++c) {
    LibraryRecord& r = records[checks[c]];
    const LibraryRecord check = make_record(r.delta, r.trajectory_index, r.clicks, header.stats);
    if (!same_bits(check.total_time, r.total_time) && !(std::isnan(check.total_time) && std::isnan(r.total_time))) {
      throw CorruptFileError("cached total time does not match the clicks", offsets[c]);
    }
    if (check.hist_counts != r.hist_counts || check.hist_overflow != r.hist_overflow) {
      throw CorruptFileError("cached histogram does not match the clicks", offsets[c]);
    }
    if (!opts.keep_clicks) r.clicks.times = {};
  }
  try {
    return LibraryIndex(std::move(header), std::move(records), std::move(incomplete));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptFile) throw CorruptFileError(e.what(), trailer_at);
    throw;
  }
}

LibrarySampler::LibrarySampler(const LibraryIndex& index, std::uint64_t seed, bool with_replacement)
    : index_(index), rng_(seed), with_replacement_(with_replacement) {
  if (!with_replacement_) {
    perm_.resize(index.size());
    std::iota(perm_.begin(), perm_.end(), 0u);
  }
}

std::size_t LibrarySampler::remaining() const noexcept {
  return with_replacement_ ? index_.size() : index_.size() - used_;
}

std::size_t LibrarySampler::next_index() {
  const std::size_t n = index_.size();
  if (n == 0) throw Error(ErrorKind::Exhausted, "library is empty");
  if (with_replacement_) {
    ++used_;
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  if (used_ == n) throw Error(ErrorKind::Exhausted, "every library record has been used");
  const std::size_t j = std::uniform_int_distribution<std::size_t>(used_, n - 1)(rng_);
  std::swap(perm_[used_], perm_[j]);
  return perm_[used_++];
}

}  // namespace qja
