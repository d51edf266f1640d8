#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "qja/abc.hpp"
#include "qja/error.hpp"

using namespace qja;
namespace fs = std::filesystem;

namespace {

const LibraryIndex& atom_library() {
  static const LibraryIndex lib = [] {
    const char* env = std::getenv("QJA_TEST_TMP");
    const fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "qja_unit";
    fs::create_directories(dir);
    const std::string path = (dir / "abc_atom.qjl").string();
    fs::remove(path);
    LibraryHeader h;
    h.system = SystemConfig::atom_default();
    h.grid_min = 0.0;
    h.grid_max = 10.0;
    h.grid_points = 11;
    h.per_point_count = 40;
    h.stop = StopRule::clicks(50);
    h.master_seed = 2024;
    h.stats.total_time_n = 50;
    generate_library(h, path, 2);
    return load_library(path);
  }();
  return lib;
}

ClickPattern observed_at(double delta, std::uint64_t index) {
  return simulate_trajectory(build_atom_model(AtomParams{2.0, delta, 1.0}), StateVector::fock(Basis{2}, {0}),
                             StopRule::clicks(50), {777, index});
}

Posterior two_bin(double a, double b) {
  return Posterior{ParameterGrid::uniform(0.0, 1.0, 2), {a, b}};
}

}  // namespace

TEST_SUITE("abc-engine") {
  TEST_CASE("distances") {
    CHECK(distance_abs(5.0, 5.0) == 0.0);
    CHECK(distance_abs(2.0, 5.0) == 3.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 100; ++i) {
      const double a = u(rng), b = u(rng);
      CHECK(distance_abs(a, b) == distance_abs(b, a));
    }

    WaitingHistogram h;
    h.bin_width = 0.5;
    h.tau_max = 1.0;
    h.counts = {3.0, 4.0};
    WaitingHistogram z = h;
    z.counts = {0.0, 0.0};
    CHECK(distance_l2(h, h) == 0.0);
    CHECK(distance_l2(h, z) == 5.0);
    WaitingHistogram other = h;
    other.bin_width = 0.25;
    try {
      distance_l2(h, other);
      FAIL("mismatched binning accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::IncompatibleHistogram);
    }

    std::uniform_int_distribution<int> c(0, 30);
    for (int t = 0; t < 200; ++t) {
      WaitingHistogram x = h, y = h, w = h;
      for (auto* hist : {&x, &y, &w}) hist->counts = {double(c(rng)), double(c(rng))};
      CHECK(distance_l2(x, w) <= distance_l2(x, y) + distance_l2(y, w) + 1e-12);
    }
  }

  TEST_CASE("Bhattacharyya fidelity") {
    const auto p = two_bin(0.5, 0.5);
    CHECK(bhattacharyya_fidelity(p, p) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bhattacharyya_fidelity(two_bin(0.5, 0.5), two_bin(0.9, 0.1)) ==
          doctest::Approx(std::sqrt(0.45) + std::sqrt(0.05)).epsilon(1e-15));
    CHECK(bhattacharyya_fidelity(two_bin(0.5, 0.5), two_bin(0.9, 0.1)) == doctest::Approx(0.894427191).epsilon(1e-9));
    CHECK(bhattacharyya_fidelity(two_bin(1.0, 0.0), two_bin(0.0, 1.0)) == 0.0);
    Posterior wide{ParameterGrid::uniform(0.0, 2.0, 2), {0.25, 0.25}};
    try {
      bhattacharyya_fidelity(p, wide);
      FAIL("grid mismatch accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GridMismatch);
    }
    const auto g = ParameterGrid::atom_default();
    auto prior = prior_posterior(g);
    CHECK(bhattacharyya_fidelity(prior, prior) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("configuration checks") {
    CHECK_NOTHROW(AbcConfig::total_time(20.0, 10).validate());
    CHECK_NOTHROW(AbcConfig::histogram(std::numeric_limits<double>::infinity(), 1).validate());
    AbcConfig bad = AbcConfig::total_time(20.0, 10);
    bad.distance = DistanceKind::L2;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_THROWS_AS(AbcConfig::total_time(0.0, 10).validate(), Error);
    CHECK_THROWS_AS(AbcConfig::total_time(1.0, 0).validate(), Error);
    CHECK(parse_statistic("hist") == StatisticKind::WaitingHistogram);
    CHECK_THROWS_AS(parse_statistic("median"), Error);
  }

  TEST_CASE("infinite threshold reproduces the prior") {
    const auto& lib = atom_library();
    const auto obs = observed_at(1.0, 0);
    auto res = abc_infer(obs, lib, AbcConfig::total_time(std::numeric_limits<double>::infinity(), lib.size()),
                         lib.grid(), 3);
    CHECK(res.accepted == lib.size());
    CHECK(res.used == lib.size());
    CHECK(res.acceptance_rate == 1.0);
    REQUIRE(res.posterior);
    auto prior = prior_posterior(lib.grid());
    for (std::size_t i = 0; i < prior.density.size(); ++i) CHECK(res.posterior->density[i] == doctest::Approx(prior.density[i]));

    const std::size_t nu = 220;
    auto partial = abc_infer(obs, lib, AbcConfig::total_time(std::numeric_limits<double>::infinity(), nu), lib.grid(), 4);
    const double p = 1.0 / 11.0;
    for (std::size_t c : partial.bin_counts) CHECK(std::abs(c - nu * p) < 3.0 * std::sqrt(nu * p * (1 - p)));
  }

  TEST_CASE("a library record found again at zero threshold") {
    const auto& lib = atom_library();
    const auto& rec = lib.records()[137];
    auto res = abc_infer(rec.clicks, lib, AbcConfig::total_time(1e-12, lib.size()), lib.grid(), 9);
    REQUIRE(res.posterior);
    CHECK(res.accepted == 1);
    const std::size_t bin = lib.point_of(137);
    CHECK(res.posterior->density[bin] == doctest::Approx(1.0 / lib.grid().bin_width));
    CHECK(res.posterior->mass_in(rec.delta, rec.delta) == doctest::Approx(1.0));

    auto h = abc_infer(rec.clicks, lib, AbcConfig::histogram(1e-12, lib.size()), lib.grid(), 9);
    CHECK(h.bin_counts[bin] >= 1);
  }

  TEST_CASE("zero acceptances give an empty result") {
    const auto& lib = atom_library();
    auto obs = observed_at(3.0, 5);
    auto res = abc_infer(obs, lib, AbcConfig::total_time(1e-12, 10), lib.grid(), 1);
    CHECK(res.accepted == 0);
    CHECK(res.used == 10);
    CHECK_FALSE(res.posterior.has_value());
  }

  TEST_CASE("acceptance is monotone in the threshold and conserves mass") {
    const auto& lib = atom_library();
    const auto obs = observed_at(1.0, 1);
    std::vector<std::size_t> prev(lib.grid().size(), 0);
    for (double eps : {2.0, 5.0, 10.0, 20.0, 40.0}) {
      auto res = abc_infer(obs, lib, AbcConfig::total_time(eps, 300), lib.grid(), 42);
      for (std::size_t i = 0; i < prev.size(); ++i) CHECK(res.bin_counts[i] >= prev[i]);
      prev = res.bin_counts;
      if (res.posterior) {
        double mass = 0.0;
        for (double d : res.posterior->density) mass += d * lib.grid().bin_width;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(res.accepted <= res.used);
      }
    }
  }

  TEST_CASE("budget and grid contracts") {
    const auto& lib = atom_library();
    const auto obs = observed_at(1.0, 2);
    try {
      abc_infer(obs, lib, AbcConfig::total_time(20.0, lib.size() + 1), lib.grid(), 1);
      FAIL("budget beyond the library accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Exhausted);
    }
    AbcConfig rep = AbcConfig::total_time(20.0, 3 * lib.size());
    rep.with_replacement = true;
    CHECK(abc_infer(obs, lib, rep, lib.grid(), 1).used == 3 * lib.size());
    try {
      abc_infer(obs, lib, AbcConfig::total_time(20.0, 10), ParameterGrid::atom_default(), 1);
      FAIL("grid mismatch accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GridMismatch);
    }
  }

  TEST_CASE("checkpoints replay one run") {
    const auto& lib = atom_library();
    const auto obs = observed_at(1.0, 3);
    const AbcConfig cfg = AbcConfig::total_time(10.0, 400);
    auto runs = abc_infer_checkpoints(obs, lib, cfg, lib.grid(), 11, {50, 100, 400});
    REQUIRE(runs.size() == 3);
    auto direct = abc_infer(obs, lib, AbcConfig::total_time(10.0, 100), lib.grid(), 11);
    CHECK(runs[1].bin_counts == direct.bin_counts);
    CHECK(runs[2].bin_counts == abc_infer(obs, lib, cfg, lib.grid(), 11).bin_counts);
  }

  TEST_CASE("fidelity curve baseline and calibration") {
    const auto& lib = atom_library();
    const auto obs = observed_at(1.0, 4);
    auto exact = posterior_from_log_likelihood(grid_log_likelihood(SystemConfig::atom_default(), obs, lib.grid()),
                                               lib.grid());
    const auto inf = std::numeric_limits<double>::infinity();
    auto curve = fidelity_curve(obs, lib, AbcConfig::total_time(inf, lib.size()), {lib.size()}, exact, 1, 5);
    CHECK(curve[0].mean_fidelity == doctest::Approx(bhattacharyya_fidelity(prior_posterior(lib.grid()), exact)));

    auto c2 = fidelity_curve(obs, lib, AbcConfig::total_time(10.0, 400), {20, 100, 400}, exact, 4, 5, 2);
    auto c1 = fidelity_curve(obs, lib, AbcConfig::total_time(10.0, 400), {20, 100, 400}, exact, 4, 5, 1);
    CHECK(c1[2].mean_fidelity == c2[2].mean_fidelity);
    CHECK(c1[2].mean_fidelity > curve[0].mean_fidelity);

    const double eps = calibrate_epsilon(obs, lib, StatisticKind::TotalTime, 0.05);
    auto res = abc_infer(obs, lib, AbcConfig::total_time(eps, lib.size()), lib.grid(), 1);
    CHECK(res.accepted >= static_cast<std::size_t>(std::ceil(0.05 * lib.size())));
    auto tighter = abc_infer(obs, lib, AbcConfig::total_time(eps * 0.999999, lib.size()), lib.grid(), 1);
    CHECK(tighter.accepted < res.accepted);
  }

  TEST_CASE("record distances use the cached statistics") {
    const auto& lib = atom_library();
    const auto obs = observed_at(2.0, 6);
    const auto sh = summarize(obs, StatisticKind::WaitingHistogram, lib.header().stats);
    const auto st = summarize(obs, StatisticKind::TotalTime, lib.header().stats);
    for (std::size_t i = 0; i < lib.size(); i += 37) {
      const auto& r = lib.records()[i];
      const auto h = waiting_histogram(r.clicks, lib.header().stats.bin_width, lib.header().stats.tau_max);
      CHECK(record_distance(r, sh) == doctest::Approx(distance_l2(h, sh.histogram)).epsilon(1e-14));
      CHECK(record_distance(r, st) == distance_abs(total_time(r.clicks, 50), st.total_time));
    }
  }
}
