#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>

#include "nhmc/error.hpp"
#include "nhmc/limit_quantities.hpp"
#include "nhmc/monte_carlo.hpp"
#include "test_support.hpp"

using namespace nhmc;
using namespace nhmc::testing;

namespace {

double inverse_normal_cdf(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("sample_path is a pure function of its counters") {
  const auto spec = homogeneous_spec(two_state_matrix(), vec({0.5, 0.5}));
  const Path a = sample_path(spec, 500, 77, 3);
  const Path b = sample_path(spec, 500, 77, 3);
  CHECK(a.states == b.states);
  CHECK(a.length() == 500);
  CHECK(sample_path(spec, 500, 77, 4).states != a.states);
  CHECK(sample_path(spec, 0, 77).length() == 0);

  const ChainSpec swap_spec(StateSpace(2), Distribution::validate(vec({1, 0})),
                            TransitionSchedule::homogeneous(swap_matrix()));
  CHECK(sample_path(swap_spec, 4, 1).states == std::vector<std::uint32_t>{0, 1, 0, 1, 0});
}

TEST_CASE("occupation_frequencies") {
  CHECK(occupation_frequencies(Path{{0, 1, 0, 1, 0}, 0}, 2) == std::vector<double>{0.5, 0.5});
  CHECK(occupation_frequencies(Path{{2, 2, 2}, 0}, 3) == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("simulated S_n matches the exact law") {
  const auto spec = homogeneous_spec(two_state_matrix(), vec({0.3, 0.7}));
  const auto f = indicator_of_second();
  const std::size_t n = 10;
  const std::size_t big_n = 100000;
  const auto exact = enumerate_exact(spec, f, n);
  const double th = 0.1;
  const auto summary = simulate_batch(spec, f, n, big_n, 5, th, 1);
  std::map<long long, double> freq;
  const double scale = std::sqrt(static_cast<double>(n) * th);
  for (double z : summary.standardized_samples) {
    freq[std::llround(z * scale + summary.e_sn_used)] += 1.0 / static_cast<double>(big_n);
  }
  for (std::size_t i = 0; i < exact.support.size(); ++i) {
    const double p = exact.probabilities[i];
    const double tol = 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(big_n)) + 1e-12;
    CHECK(std::abs(freq[std::llround(exact.support[i])] - p) <= tol);
  }
  CHECK(summary.e_sn_used == doctest::Approx(exact.mean).epsilon(1e-12));
}

TEST_CASE("ks_statistic") {
  const std::vector<double> zero{0.0};
  CHECK(ks_statistic(zero) == doctest::Approx(0.5).epsilon(1e-15));

  const std::size_t big_n = 1000;
  std::vector<double> quantiles;
  for (std::size_t i = 1; i <= big_n; ++i) {
    quantiles.push_back(inverse_normal_cdf((static_cast<double>(i) - 0.5) / big_n));
  }
  CHECK(ks_statistic(quantiles) == doctest::Approx(0.5 / big_n).epsilon(1e-6));

  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> draws(10000);
  for (double& d : draws) d = g(rng);
  CHECK(ks_statistic(draws) < 1.63 / 100.0);

  CHECK_THROWS_AS(ks_statistic(std::span<const double>{}), Error);
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("pairwise_sum") {
  std::vector<double> ones(1000, 1.0);
  CHECK(pairwise_sum(ones) == 1000.0);
  CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
  std::vector<double> tenths(1 << 16, 0.1);
  CHECK(std::abs(pairwise_sum(tenths) - 6553.6) <= 1e-9);
}

TEST_CASE("simulate_batch is bit-identical across thread counts") {
  const auto base = two_state_matrix();
  const auto alt = stoch({{0.3, 0.7}, {0.6, 0.4}});
  const ChainSpec spec(StateSpace(2), Distribution::validate(vec({1, 0})),
                       make_perturbed_schedule(base, alt, EpsilonSchedule::power(1.0, 1.0)));
  const auto f = indicator_of_second();
  const auto one = simulate_batch(spec, f, 300, 1000, 42, 0.11, 1);
  for (unsigned t : {2u, 3u, 8u}) {
    const auto many = simulate_batch(spec, f, 300, 1000, 42, 0.11, t);
    REQUIRE(many.standardized_samples.size() == one.standardized_samples.size());
    bool all_same = true;
    for (std::size_t i = 0; i < one.standardized_samples.size(); ++i) {
      all_same = all_same && same_bits(one.standardized_samples[i], many.standardized_samples[i]);
    }
    CHECK(all_same);
    CHECK(same_bits(one.ks_distance, many.ks_distance));
    CHECK(same_bits(one.v_over_n_mean, many.v_over_n_mean));
    CHECK(same_bits(one.z_variance, many.z_variance));
    CHECK(same_bits(one.w_sq_over_n_mean, many.w_sq_over_n_mean));
    CHECK(one.occupation == many.occupation);
  }
  double occ = 0.0;
  for (double o : one.occupation) occ += o;
  CHECK(occ == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("simulate_batch argument checks") {
  const auto spec = homogeneous_spec(two_state_matrix(), vec({1, 0}));
  try {
    simulate_batch(spec, indicator_of_second(), 10, 99, 1, 0.1, 1);
    FAIL("expected InvalidN");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidN);
  }
  try {
    simulate_batch(spec, indicator_of_second(), 10, 1000, 1, 0.0, 1);
    FAIL("expected NonpositiveTheta");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonpositiveTheta);
  }
  CHECK_THROWS_AS(simulate_batch(spec, indicator_of_second(), 0, 1000, 1, 0.1, 1), Error);
}

TEST_CASE("mdp_estimate") {
  const auto spec = homogeneous_spec(iid_matrix(), vec({0.5, 0.5}));
  const auto f = indicator_of_second();
  const std::size_t big_n = 20000;
  const auto est = mdp_estimate(spec, f, {64, 16}, 0.75, {0.5, 0.0, 0.25, 50.0}, big_n, 3, 0.25, 1);
  REQUIRE(est.n_grid == std::vector<std::size_t>{16, 64});
  REQUIRE(est.x_grid == std::vector<double>{0.0, 0.25, 0.5, 50.0});

  for (std::size_t g = 0; g < 2; ++g) {
    CHECK(est.cell(g, 0).p_hat == 1.0);
    CHECK(*est.cell(g, 0).normalized_log == 0.0);
    CHECK(est.cell(g, 1).p_hat >= est.cell(g, 2).p_hat);
    CHECK(est.cell(g, 3).flagged);
    CHECK_FALSE(est.cell(g, 3).normalized_log.has_value());
    CHECK(est.cell(g, 2).reference == doctest::Approx(-0.5));
  }
  CHECK_FALSE(est.warnings.empty());

  // S_16 ~ Binomial(16, 1/2): P(|S - 8| >= 0.5 * 16^0.75 = 4)
  double tail = 0.0;
  for (int k = 0; k <= 16; ++k) {
    if (std::abs(k - 8) >= 4) tail += binomial_half(16, k);
  }
  const double sd = std::sqrt(tail * (1.0 - tail) / big_n);
  CHECK(std::abs(est.cell(0, 2).p_hat - tail) <= 4.0 * sd);
  CHECK(*est.cell(0, 2).normalized_log ==
        doctest::Approx(16.0 / 64.0 * std::log(est.cell(0, 2).p_hat)));

  const auto gaps = mdp_relative_gaps(est, 2);
  REQUIRE(gaps.size() == 2);
  CHECK(gaps[0].has_value());
  CHECK_FALSE(mdp_relative_gaps(est, 0)[0].has_value());

  try {
    mdp_estimate(spec, f, {16}, 0.5, {1.0}, 100, 1, 0.25, 1);
    FAIL("expected InvalidAlpha");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidAlpha);
  }
  CHECK_THROWS_AS(mdp_estimate(spec, f, {16}, 1.0, {1.0}, 100, 1, 0.25, 1), Error);
}

TEST_CASE("mdp_estimate is bit-identical across thread counts") {
  const auto spec = homogeneous_spec(two_state_matrix(), vec({1, 0}));
  const auto a = mdp_estimate(spec, indicator_of_second(), {50, 200}, 0.7, {0.3, 0.6}, 2000, 8, 0.11, 1);
  const auto b = mdp_estimate(spec, indicator_of_second(), {50, 200}, 0.7, {0.3, 0.6}, 2000, 8, 0.11, 4);
  for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(a.cells[i].hits == b.cells[i].hits);
}

TEST_CASE("sample spill round trip") {
  const auto file = (std::filesystem::temp_directory_path() / "nhmc_spill_test.bin").string();
  const std::vector<double> values{1.5, -0.0, 3.25e-300, -7.0};
  write_sample_spill(file, values);
  CHECK(std::filesystem::file_size(file) == 8 + 8 * values.size());
  const auto back = read_sample_spill(file);
  REQUIRE(back.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) CHECK(same_bits(back[i], values[i]));
  std::filesystem::remove(file);
  CHECK_THROWS_AS(read_sample_spill(file), Error);
}
