#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "modaudit/gap_stats.hpp"

using namespace modaudit;

namespace {

GapSampleSet sample_of(std::vector<double> gaps) {
  return GapSampleSet{"topic", "model", Cohort::false_positive, std::move(gaps)};
}

// Test-local quadrature for the index: trapezoid integration of the mixture
// density over [lo, hi], split at zero, evaluating the kernels directly.
// Independent of the closed-form path under test.
double quadrature_index(const std::vector<double>& gaps, double h, double lo, double hi,
                        std::size_t intervals) {
  const double d = (hi - lo) / static_cast<double>(intervals);
  const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * h * static_cast<double>(gaps.size()));
  const auto f = [&](double x) {
    double acc = 0.0;
    for (double g : gaps) {
      const double z = (x - g) / h;
      acc += std::exp(-0.5 * z * z);
    }
    return acc * norm;
  };
  double above = 0.0, below = 0.0;
  for (std::size_t i = 0; i <= intervals; ++i) {
    const double x = lo + d * static_cast<double>(i);
    const double weight = (i == 0 || i == intervals) ? 0.5 : 1.0;
    const double fx = weight * f(x);
    if (x > 0.0) {
      above += fx;
    } else if (x < 0.0) {
      below += fx;
    } else {
      above += 0.5 * fx;
      below += 0.5 * fx;
    }
  }
  return (above - below) * d;
}

}  // namespace

TEST_CASE("silverman bandwidth matches the worked two-point value") {
  // gaps {-1, 1}: sigma = sqrt(2), h = 1.06 * sqrt(2) * 2^(-1/5)
  const auto density = fit_density(sample_of({-1.0, 1.0}));
  CHECK(density.bandwidth == doctest::Approx(1.3050).epsilon(1e-4));
  CHECK(density.bandwidth ==
        doctest::Approx(1.06 * std::sqrt(2.0) * std::pow(2.0, -0.2)).epsilon(1e-15));
}

TEST_CASE("explicit bandwidth overrides the rule") {
  const auto density = fit_density(sample_of({-1.0, 1.0, 5.0}), 0.1);
  CHECK(density.bandwidth == 0.1);
}

TEST_CASE("degenerate samples are rejected") {
  CHECK_THROWS_AS(fit_density(sample_of({0.5, 0.5, 0.5})), std::invalid_argument);
  CHECK_THROWS_AS(fit_density(sample_of({0.5})), std::invalid_argument);
  CHECK_THROWS_AS(fit_density(sample_of({})), std::invalid_argument);
  CHECK_THROWS_AS(fit_density(sample_of({0.0, std::nan("")})), std::invalid_argument);
  CHECK_THROWS_AS(fit_density(sample_of({-1.0, 1.0}), -0.5), std::invalid_argument);
  // all-equal gaps are fine once a bandwidth is given
  CHECK(fit_density(sample_of({0.5, 0.5, 0.5}), 0.2).bandwidth == 0.2);
}

TEST_CASE("amplification index reproduces the hand-evaluated three-point case") {
  // (1/3) * [(2*Phi(1)-1) + (2*Phi(3)-1) + (2*Phi(-0.5)-1)] ~= 0.4324
  const auto density = fit_density(sample_of({0.1, 0.3, -0.05}), 0.1);
  const double index = amplification_index(density);
  CHECK(index == doctest::Approx(0.4324).epsilon(2e-4));

  // cross-check against trapezoid quadrature on a dense grid
  const double oracle = quadrature_index(density.sample.gaps, 0.1, -3.0, 3.0, 1 << 20);
  CHECK(index == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("mirrored samples have index 0 and negation flips the sign bitwise") {
  const auto density = fit_density(sample_of({0.4, -0.4, 0.15, -0.15}));
  CHECK(std::abs(amplification_index(density)) <= 1e-12);

  std::mt19937_64 rng(99);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> gaps;
    const std::size_t n = 2 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i)
      gaps.push_back(static_cast<double>(rng() % 2001) / 1000.0 - 1.0);
    std::vector<double> negated(gaps.size());
    std::transform(gaps.begin(), gaps.end(), negated.begin(), [](double g) { return -g; });
    GapSampleSet a = sample_of(gaps);
    GapSampleSet b = sample_of(negated);
    if (sample_stddev(a.gaps) == 0.0) continue;
    const double ia = amplification_index(fit_density(std::move(a)));
    const double ib = amplification_index(fit_density(std::move(b)));
    CHECK(ia == -ib);  // exact, including sign of zero handling
  }
}

TEST_CASE("small-bandwidth limit recovers the sign-mass difference") {
  std::mt19937_64 rng(123);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> gaps;
    const std::size_t n = 2 + rng() % 50;
    int pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // |gap| >= 0.1 so every kernel is far from zero relative to h
      double g = 0.1 + static_cast<double>(rng() % 900) / 1000.0;
      if (rng() % 2) g = -g;
      (g > 0 ? pos : neg)++;
      gaps.push_back(g);
    }
    const double expected = static_cast<double>(pos - neg) / static_cast<double>(n);
    const double index = amplification_index(fit_density(sample_of(gaps), 1e-4));
    CHECK(index == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("index stays strictly inside (-1, 1)") {
  // saturating case: all gaps positive, tiny spread, tiny bandwidth
  const double index = amplification_index(fit_density(sample_of({0.5, 0.5001}), 1e-6));
  CHECK(index < 1.0);
  CHECK(index > 1.0 - 1e-12);

  std::mt19937_64 rng(7);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> gaps;
    const std::size_t n = 2 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i)
      gaps.push_back(static_cast<double>(rng() % 2001) / 1000.0 - 1.0);
    if (sample_stddev(gaps) == 0.0) continue;
    const double index_r = amplification_index(fit_density(sample_of(gaps)));
    CHECK(index_r > -1.0);
    CHECK(index_r < 1.0);
  }
}

TEST_CASE("index is invariant under permutation and whole-sample duplication") {
  std::vector<double> gaps = {0.3, -0.2, 0.7, 0.05, -0.6};
  const double base = amplification_index(fit_density(sample_of(gaps), 0.25));

  std::vector<double> shuffled = gaps;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(amplification_index(fit_density(sample_of(shuffled), 0.25)) ==
        doctest::Approx(base).epsilon(1e-13));

  std::vector<double> doubled = gaps;
  doubled.insert(doubled.end(), gaps.begin(), gaps.end());
  CHECK(amplification_index(fit_density(sample_of(doubled), 0.25)) ==
        doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("amplification contrast is a plain difference with sign semantics") {
  CHECK(amplification_contrast(0.37, 0.37) == 0.0);
  CHECK(amplification_contrast(0.6, 0.2) == doctest::Approx(0.4));

  // FP cohort shifted +0.2 relative to TN must give positive contrast
  std::mt19937_64 rng(31);
  std::vector<double> tn_gaps, fp_gaps;
  for (int i = 0; i < 300; ++i) {
    const double g = static_cast<double>(rng() % 1001) / 1000.0 - 0.5;
    tn_gaps.push_back(g);
    fp_gaps.push_back(g + 0.2);
  }
  const double fp_index = amplification_index(fit_density(sample_of(fp_gaps)));
  const double tn_index = amplification_index(fit_density(sample_of(tn_gaps)));
  CHECK(amplification_contrast(fp_index, tn_index) > 0.0);
}

TEST_CASE("density curve normalizes, peaks at the mode, and mirrors symmetric samples") {
  const auto density = fit_density(sample_of({0.2, 0.25, 0.15, 0.22, 0.18}));
  const double h = density.bandwidth;

  SUBCASE("integral over +-10 sigma is 1") {
    double mean = 0.0;
    for (double g : density.sample.gaps) mean += g;
    mean /= static_cast<double>(density.sample.gaps.size());
    const double sigma = sample_stddev(density.sample.gaps) + h;
    const auto grid = linspace(mean - 10.0 * sigma, mean + 10.0 * sigma, 20001);
    const auto curve = density_curve(density, grid);
    double integral = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
      integral += 0.5 * (curve[i].second + curve[i - 1].second) *
                  (curve[i].first - curve[i - 1].first);
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("argmax of a dense grid sits at the central cluster") {
    const auto grid = linspace(-1.0, 1.0, 4001);
    const auto curve = density_curve(density, grid);
    const auto max_it = std::max_element(
        curve.begin(), curve.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; });
    CHECK(max_it->first == doctest::Approx(0.2).epsilon(0.05));
  }

  SUBCASE("symmetric sample gives a symmetric curve") {
    const auto symmetric = fit_density(sample_of({-0.5, 0.5, -0.2, 0.2}));
    const auto grid = linspace(-2.0, 2.0, 1601);
    const auto curve = density_curve(symmetric, grid);
    const std::size_t m = curve.size();
    for (std::size_t i = 0; i < m; ++i)
      CHECK(curve[i].second == doctest::Approx(curve[m - 1 - i].second).epsilon(1e-12));
  }

  SUBCASE("grid must be sorted and nonempty") {
    CHECK_THROWS_AS(density_curve(density, std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(density_curve(density, std::vector<double>{1.0, 0.0}),
                    std::invalid_argument);
  }
}
