#include "modaudit/gap_stats.hpp"

#include <cmath>
#include <stdexcept>

namespace modaudit {

const char* to_string(Cohort cohort) {
  return cohort == Cohort::false_positive ? "false_positive" : "true_negative";
}

Cohort cohort_from_string(const std::string& s) {
  if (s == "false_positive") return Cohort::false_positive;
  if (s == "true_negative") return Cohort::true_negative;
  throw std::invalid_argument("unknown cohort: " + s);
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("sample_stddev requires n >= 2");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double silverman_bandwidth(std::span<const double> gaps) {
  const double sigma = sample_stddev(gaps);
  return 1.06 * sigma * std::pow(static_cast<double>(gaps.size()), -0.2);
}

namespace {

void check_sample(const GapSampleSet& sample) {
  if (sample.gaps.size() < 2)
    throw std::invalid_argument("gap sample needs n >= 2 (got " +
                                std::to_string(sample.gaps.size()) + ")");
  for (double g : sample.gaps)
    if (!std::isfinite(g)) throw std::invalid_argument("gap sample contains a non-finite value");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

DensityEstimate fit_density(GapSampleSet sample, std::optional<double> bandwidth) {
  check_sample(sample);
  double h;
  if (bandwidth) {
    if (*bandwidth <= 0.0 || !std::isfinite(*bandwidth))
      throw std::invalid_argument("bandwidth must be positive and finite");
    h = *bandwidth;
  } else {
    h = silverman_bandwidth(sample.gaps);
    if (h <= 0.0)
      throw std::invalid_argument(
          "zero-variance sample (all gaps equal); pass an explicit bandwidth");
  }
  return DensityEstimate{std::move(sample), h};
}

double amplification_index(const DensityEstimate& density) {
  const double h = density.bandwidth;
  const auto& gaps = density.sample.gaps;
  // 2*Phi(g/h) - 1 == erf(g / (h*sqrt(2))). Evaluating erf on |g| and
  // applying the sign keeps the index bitwise antisymmetric under sample
  // negation.
  double sum = 0.0;
  for (double g : gaps) {
    if (g == 0.0) continue;  // Phi(0) terms contribute nothing
    const double t = std::erf(std::abs(g) * kInvSqrt2 / h);
    sum += g < 0.0 ? -t : t;
  }
  double index = sum / static_cast<double>(gaps.size());
  // The finite-sample value is strictly interior; round-off can saturate the
  // erf terms, so land on the nearest representable interior value instead.
  if (index >= 1.0) index = std::nextafter(1.0, 0.0);
  if (index <= -1.0) index = std::nextafter(-1.0, 0.0);
  return index;
}

double amplification_contrast(double index_fp, double index_tn) {
  return index_fp - index_tn;
}

std::vector<std::pair<double, double>> density_curve(const DensityEstimate& density,
                                                     std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("density_curve requires a nonempty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] < grid[i - 1]) throw std::invalid_argument("density_curve grid must be sorted");

  const double h = density.bandwidth;
  const auto& gaps = density.sample.gaps;
  const double norm = kInvSqrt2Pi / (h * static_cast<double>(gaps.size()));
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid.size());
  for (double x : grid) {
    double f = 0.0;
    for (double g : gaps) {
      const double z = (x - g) / h;
      f += std::exp(-0.5 * z * z);
    }
    curve.emplace_back(x, f * norm);
  }
  return curve;
}

std::vector<double> linspace(double lo, double hi, std::size_t points) {
  if (points < 2) throw std::invalid_argument("linspace requires at least 2 points");
  std::vector<double> out(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

}  // namespace modaudit
