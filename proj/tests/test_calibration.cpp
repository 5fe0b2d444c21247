#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "cr2/calibration.hpp"
#include "cr2/random.hpp"
#include "oracles.hpp"

using namespace cr2;

namespace {

std::vector<CalibrationRecord> records(std::initializer_list<std::pair<double, int>> xs) {
  std::vector<CalibrationRecord> out;
  for (auto [s, r] : xs) out.push_back({s, static_cast<std::uint8_t>(r)});
  return out;
}

std::vector<CalibrationRecord> constant(std::size_t n, double score, int r) {
  return std::vector<CalibrationRecord>(n, CalibrationRecord{score, static_cast<std::uint8_t>(r)});
}

std::vector<oracle::Record> to_oracle(const std::vector<CalibrationRecord>& rs) {
  std::vector<oracle::Record> out;
  for (const auto& r : rs) out.push_back({r.score, r.disagree});
  return out;
}

ThresholdTable small_table() {
  return ThresholdTable({0.5, 1.0}, {0.01, 0.05}, {kNeverAccept, 0.7, 0.4, 0.0});
}

}  // namespace

TEST_CASE("empirical risk and corrected risk examples") {
  const auto rs = records({{0.2, 1}, {0.5, 0}, {0.9, 1}});
  CHECK(empirical_risk(rs, 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(accepted_disagreements(rs, 0.5) == 1);
  CHECK(empirical_risk(rs, 1.5) == 0.0);
  CHECK(empirical_risk(rs, kNeverAccept) == 0.0);
  CHECK(empirical_risk(rs, 0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK(crc_correction(constant(9, 0.5, 1), kNeverAccept) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(crc_correction(constant(99, 0.5, 1), kNeverAccept) == doctest::Approx(0.01).epsilon(1e-15));
  // N = 4 with three accepted disagreements: 4/5 * 3/4 + 1/5
  const auto four = records({{0.6, 1}, {0.7, 1}, {0.8, 1}, {0.9, 0}});
  CHECK(crc_correction(four, 0.5) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(crc_correction_count(four, 0.5) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(empirical_risk(std::vector<CalibrationRecord>{}, 0.5), std::invalid_argument);
}

TEST_CASE("the two correction formulas agree") {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    std::vector<CalibrationRecord> rs(1 + rng.uniform_index(300));
    for (auto& r : rs) r = {rng.uniform(), static_cast<std::uint8_t>(rng.bernoulli(0.3))};
    const double tau = rng.uniform(-0.1, 1.1);
    CHECK(std::fabs(crc_correction(rs, tau) - crc_correction_count(rs, tau)) <= 1e-15);
  }
}

TEST_CASE("calibrate_threshold examples") {
  const std::size_t n = 99;
  SUBCASE("no disagreements accept everything once alpha reaches 1/(N+1)") {
    const auto rs = constant(n, 0.3, 0);
    CHECK(calibrate_threshold(rs, 0.05) == 0.0);
    CHECK(calibrate_threshold(rs, 1.0 / (n + 1.0)) == 0.0);
    CHECK(calibrate_threshold(rs, 0.999 / (n + 1.0)) == kNeverAccept);
  }
  SUBCASE("alpha below 1/(N+1) returns the sentinel") {
    Rng rng(2);
    std::vector<CalibrationRecord> rs(n);
    for (auto& r : rs) r = {rng.uniform(), static_cast<std::uint8_t>(rng.bernoulli(0.5))};
    CHECK(calibrate_threshold(rs, 0.009) == kNeverAccept);
  }
  SUBCASE("hand example") {
    // N = 4, alpha = 0.4: need d <= 1, so accept only the top disagreement
    const auto rs = records({{0.1, 1}, {0.4, 1}, {0.6, 0}, {0.8, 1}});
    CHECK(calibrate_threshold(rs, 0.4) == 0.6);
    CHECK(calibrate_threshold(rs, 0.2) == kNeverAccept);
    CHECK(calibrate_threshold(rs, 0.6) == 0.4);
    CHECK(calibrate_threshold(rs, 0.8) == 0.0);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(calibrate_threshold(constant(3, 0.5, 0), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_threshold(constant(3, 0.5, 0), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_threshold(constant(3, 1.5, 0), 0.1), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_threshold(std::vector<CalibrationRecord>{}, 0.1), std::invalid_argument);
  }
}

TEST_CASE("calibrate_threshold matches brute force over all candidates") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    std::vector<CalibrationRecord> rs(1 + rng.uniform_index(200));
    const bool coarse = rng.bernoulli(0.3);  // repeated scores
    for (auto& r : rs) {
      const double s = coarse ? std::round(rng.uniform() * 10.0) / 10.0 : rng.uniform();
      r = {s, static_cast<std::uint8_t>(rng.bernoulli(rng.uniform(0.0, 0.4)))};
    }
    const double alpha = std::exp(rng.uniform(std::log(0.002), std::log(0.5)));
    const double tau = calibrate_threshold(rs, alpha);
    CHECK(tau == oracle::threshold(to_oracle(rs), alpha));
    // validity of the returned threshold
    if (tau != kNeverAccept) CHECK(crc_correction_count(rs, tau) <= alpha);
  }
}

TEST_CASE("threshold is non-increasing in alpha and risk non-increasing in tau") {
  Rng rng(4);
  const std::vector<double> alphas{0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.3};
  for (int t = 0; t < 200; ++t) {
    std::vector<CalibrationRecord> rs(50 + rng.uniform_index(500));
    for (auto& r : rs) {
      const double s = rng.uniform();
      r = {s, static_cast<std::uint8_t>(rng.bernoulli(s * 0.3))};
    }
    const auto taus = calibrate_thresholds(rs, alphas);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      CHECK(taus[i] == calibrate_threshold(rs, alphas[i]));
      if (i > 0) CHECK(taus[i] <= taus[i - 1]);
    }
    double prev = 2.0;
    for (int k = 0; k <= 20; ++k) {
      const double r = empirical_risk(rs, k / 20.0);
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("exchangeable test points meet the risk level on average") {
  // Scores and labels drawn i.i.d.; the expected test risk must not exceed alpha.
  Rng rng(5);
  const double alpha = 0.1;
  const int trials = 20000;
  double hits = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<CalibrationRecord> rs(99);
    for (auto& r : rs) {
      const double s = rng.uniform();
      r = {s, static_cast<std::uint8_t>(rng.bernoulli(s))};
    }
    const double tau = calibrate_threshold(rs, alpha);
    const double s = rng.uniform();
    hits += (rng.bernoulli(s) && s >= tau) ? 1.0 : 0.0;
  }
  const double risk = hits / trials;
  CAPTURE(risk);
  CHECK(risk <= alpha + 3.0 * std::sqrt(alpha * (1 - alpha) / trials));
}

TEST_CASE("log-spaced grids") {
  const auto g = log_spaced(0.1, 20.0, 24);
  REQUIRE(g.size() == 24);
  CHECK(g.front() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(g.back() == doctest::Approx(20.0).epsilon(1e-14));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(200.0, 1.0 / 23.0)));
  CHECK(default_lambda_grid() == g);
  CHECK_THROWS_AS(log_spaced(0.0, 1.0, 3), std::invalid_argument);
}

TEST_CASE("threshold table validation and lookup") {
  const auto t = small_table();
  CHECK(t.lookup(0.5, 0.01) == kNeverAccept);
  CHECK(t.lookup(1.0, 0.01) == 0.4);
  CHECK(t.lookup(1.0, 0.05) == 0.0);
  CHECK_THROWS_AS(t.lookup(0.75, 0.01), std::out_of_range);
  CHECK_THROWS_AS(t.lookup(1.0, 0.02), std::out_of_range);
  CHECK_THROWS_AS(ThresholdTable({0.5, 1.0}, {0.01}, {0.3}), std::invalid_argument);
  CHECK_THROWS_AS(ThresholdTable({1.0, 0.5}, {0.01}, {0.3, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(ThresholdTable({1.0}, {0.01, 0.05}, {0.3, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(ThresholdTable({1.0}, {0.01}, {1.2}), std::invalid_argument);
  CHECK_THROWS_AS(ThresholdTable({1.0}, {1.0}, {0.2}), std::invalid_argument);
}

TEST_CASE("threshold table text round trip") {
  CalibratedTable c{small_table(), TableProvenance{"g1", "t2", "d3", 5000}};
  const auto text = serialize_table(c);
  CHECK(text.find("inf") != std::string::npos);
  const auto back = parse_table(text);
  CHECK(back.table == c.table);
  CHECK(back.provenance == c.provenance);
  CHECK(serialize_table(back) == text);

  // awkward doubles survive exactly
  const ThresholdTable odd({0.1 * 3, std::exp(1.0)}, {0.002}, {1.0 / 3.0, 0.1 + 0.2});
  CHECK(parse_table(serialize_table({odd, {}})).table == odd);

  CHECK_THROWS_AS(parse_table(""), std::runtime_error);
  CHECK_THROWS_AS(parse_table("# something else\n"), std::runtime_error);
  auto ragged = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  CHECK_THROWS_AS(parse_table(ragged), std::runtime_error);
  auto bad = text;
  bad.replace(bad.find(",inf"), 4, ",abc");
  CHECK_THROWS_AS(parse_table(bad), std::runtime_error);
}

TEST_CASE("disagreement labels") {
  SUBCASE("single-model pool never disagrees") {
    const std::vector<std::vector<double>> p{{0.1}, {0.9}}, c{{0.3}, {0.3}};
    CHECK(disagreement_labels(p, c, 1.0, 0) == std::vector<std::uint8_t>{0, 0});
  }
  SUBCASE("large lambda with the cheapest local model gives no disagreements") {
    Rng rng(6);
    std::vector<std::vector<double>> p, c;
    for (int i = 0; i < 500; ++i) {
      p.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      c.push_back({0.1, rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)});
    }
    for (auto r : disagreement_labels(p, c, 1e3, 0)) CHECK(r == 0);
    // at lambda -> 0 a disagreement is exactly an edge model being more accurate
    const auto low = disagreement_labels(p, c, 1e-12, 0);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(low[i] == (std::max(p[i][1], p[i][2]) > p[i][0] + 1e-9 ? 1 : 0));
  }
}
