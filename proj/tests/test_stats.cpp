#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "frameprobe/error.hpp"
#include "frameprobe/stats.hpp"

using namespace frameprobe;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<double>& c) {
  double wins = 0.0;
  for (double x : s) {
    for (double y : c) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(s.size() * c.size());
}

std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
  return v;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("chance baselines") {
    CHECK(chance_baseline(McqaChance{4}) == 0.25);
    CHECK(chance_baseline(FreeformChance{10000, 1}) == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(chance_baseline(FreeformChance{10000, 100}) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(chance_baseline(FreeformChance{10, 100}) == 1.0);
    CHECK_THROWS_AS(chance_baseline(McqaChance{1}), Error);
    CHECK_THROWS_AS(chance_baseline(FreeformChance{0.5, 1}), Error);
    CHECK_THROWS_AS(chance_baseline(FreeformChance{100, 0.5}), Error);
  }

  TEST_CASE("auc examples") {
    CHECK(auc(std::vector{0.9, 0.8}, std::vector{0.1, 0.2}) == 1.0);
    CHECK(auc(std::vector{0.5}, std::vector{0.5}) == 0.5);
    CHECK(auc(std::vector{0.3, 0.7}, std::vector{0.4, 0.2}) == 0.75);
    CHECK_THROWS_AS(auc(std::vector<double>{}, std::vector{0.1}), Error);
  }

  TEST_CASE("auc matches pair counting, is antisymmetric and rank-invariant") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 300; ++t) {
      const auto s = random_scores(rng, 1 + rng() % 60, 1 + static_cast<int>(rng() % 12));
      const auto c = random_scores(rng, 1 + rng() % 60, 1 + static_cast<int>(rng() % 12));
      CHECK(auc(s, c) == pair_count_auc(s, c));
      CHECK(std::abs(auc(s, c) + auc(c, s) - 1.0) <= 1e-15);
      auto warp = [](std::vector<double> v) {
        for (auto& x : v) x = std::exp(3.0 * x) - 7.0;
        return v;
      };
      CHECK(auc(warp(s), warp(c)) == auc(s, c));
    }
  }

  TEST_CASE("best_threshold examples") {
    auto t = best_threshold(std::vector{0.8, 0.9}, std::vector{0.1, 0.2});
    CHECK(t.threshold == doctest::Approx(0.5));
    CHECK(t.balanced_accuracy == 1.0);

    t = best_threshold(std::vector{0.2, 0.4, 0.4}, std::vector{0.2, 0.4, 0.4});
    CHECK(t.balanced_accuracy == 0.5);
    CHECK(t.threshold == -std::numeric_limits<double>::infinity());

    t = best_threshold(std::vector{1.0}, std::vector{0.0});
    CHECK(t.threshold == 0.5);
    CHECK(t.balanced_accuracy == 1.0);
  }

  TEST_CASE("best_threshold never falls below chance") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 500; ++t) {
      const auto s = random_scores(rng, 1 + rng() % 30, 6);
      const auto c = random_scores(rng, 1 + rng() % 30, 6);
      CHECK(best_threshold(s, c).balanced_accuracy >= 0.5);
    }
  }

  TEST_CASE("bootstrap examples and invariants") {
    const std::vector<double> s = {0.9, 0.8, 0.95, 0.7};
    const std::vector<double> c = {0.1, 0.2, 0.3};
    const auto r = bootstrap_auc(s, c, 10, 1);
    CHECK(r.auc_mean == 1.0);
    CHECK(r.auc_std == 0.0);
    CHECK(r.per_iteration_auc.size() == 10);
    CHECK(r.seed == 1);

    const auto identity = [](std::size_t n, std::mt19937_64&) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      return idx;
    };
    std::mt19937_64 rng(8);
    for (int t = 0; t < 50; ++t) {
      const auto a = random_scores(rng, 1 + rng() % 40, 5);
      const auto b = random_scores(rng, 1 + rng() % 40, 5);
      const auto one = bootstrap_auc(a, b, 1, 99, identity);
      CHECK(one.auc_mean == auc(a, b));
      CHECK(one.auc_std == 0.0);

      const auto x = bootstrap_auc(a, b, 10, 42);
      const auto y = bootstrap_auc(a, b, 10, 42);
      CHECK(x.per_iteration_auc == y.per_iteration_auc);
      CHECK(x.per_iteration_threshold == y.per_iteration_threshold);
      const double mean = std::accumulate(x.per_iteration_auc.begin(), x.per_iteration_auc.end(), 0.0) / 10.0;
      CHECK(std::abs(x.auc_mean - mean) <= 1e-12);
    }
  }

  TEST_CASE("bootstrap of identical distributions centres on 0.5") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    std::vector<double> s(400), c(400);
    for (auto& v : s) v = normal(rng);
    for (auto& v : c) v = normal(rng);
    const auto r = bootstrap_auc(s, c, 10, 3);
    // Standard error of a 400 x 400 null AUC is sqrt((n_s + n_c + 1) / (12 n_s n_c)).
    const double se = std::sqrt(801.0 / (12.0 * 400 * 400));
    CHECK(std::abs(r.auc_mean - 0.5) < 3 * se);
  }

  TEST_CASE("population mean and std") {
    const auto ms = mean_std(std::vector{1.0, 2.0, 3.0, 4.0});
    CHECK(ms.mean == 2.5);
    CHECK(ms.std == doctest::Approx(std::sqrt(1.25)));
  }

  TEST_CASE("group accuracy") {
    const auto zero = group_accuracy(std::vector(12, 0.0), 10, 1);
    CHECK(zero.mean == 0.0);
    CHECK(zero.std == 0.0);
    CHECK_THROWS_AS(group_accuracy(std::vector<double>{}, 10, 1), Error);
    const auto g = group_accuracy(std::vector{0.2, 0.4, 0.6}, 10, 1);
    CHECK(g.mean >= 0.2);
    CHECK(g.mean <= 0.6);
  }

  TEST_CASE("iteration engines are stable") {
    auto a = iteration_engine(7, 3);
    auto b = iteration_engine(7, 3);
    auto c = iteration_engine(7, 4);
    CHECK(a() == b());
    CHECK(a() != c());
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(uniform_index(rng, 7) < 7);
  }

  TEST_CASE("covariate bins") {
    std::vector<CovariateSample> samples = {{1e6, 0.1}, {2e6, 0.3}, {std::nullopt, 0.9}};
    const std::vector<double> two_bins = {0, 5e8, 1e10};
    auto r = bin_by_covariate(samples, Covariate::box_office, two_bins);
    CHECK(r.per_bin_counts == std::vector<std::size_t>{2, 0});
    CHECK(r.per_bin_accuracy[0] == doctest::Approx(0.2));
    CHECK_FALSE(r.per_bin_accuracy[1].has_value());
    CHECK(r.missing == 1);

    samples = {{1e8, 0.25}, {9e8, 0.75}};
    r = bin_by_covariate(samples, Covariate::box_office, two_bins);
    CHECK(r.per_bin_counts == std::vector<std::size_t>{1, 1});
    CHECK(*r.per_bin_accuracy[0] == 0.25);
    CHECK(*r.per_bin_accuracy[1] == 0.75);

    samples = {{1e10, 0.5}};
    r = bin_by_covariate(samples, Covariate::box_office, two_bins);
    CHECK(r.per_bin_counts == std::vector<std::size_t>{0, 1});

    const std::vector<CovariateSample> none = {{std::nullopt, 0.5}};
    CHECK_THROWS_AS(bin_by_covariate(none, Covariate::imdb_rating, default_bin_edges(Covariate::imdb_rating)), Error);
  }

  TEST_CASE("monotone recall gives non-decreasing bins") {
    std::mt19937_64 rng(9);
    std::vector<CovariateSample> samples;
    for (int i = 0; i < 400; ++i) {
      const double revenue = std::pow(10.0, 6.0 + 3.0 * static_cast<double>(rng() % 1000) / 1000.0);
      const double p = std::clamp((std::log10(revenue) - 6.0) / 3.0, 0.0, 1.0);
      int hits = 0;
      for (int f = 0; f < 140; ++f) hits += static_cast<double>(rng() % 10000) / 10000.0 < p;
      samples.push_back({revenue, hits / 140.0});
    }
    const std::vector<double> edges = {1e6, 1e7, 1e8, 1e9};
    const auto r = bin_by_covariate(samples, Covariate::box_office, edges);
    for (std::size_t b = 1; b < r.per_bin_accuracy.size(); ++b) {
      CHECK(*r.per_bin_accuracy[b] >= *r.per_bin_accuracy[b - 1]);
    }
    std::size_t total = 0;
    for (auto n : r.per_bin_counts) total += n;
    CHECK(total == samples.size());
  }
}
