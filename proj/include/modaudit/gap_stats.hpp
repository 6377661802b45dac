#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace modaudit {

enum class Cohort { false_positive, true_negative };

const char* to_string(Cohort cohort);
Cohort cohort_from_string(const std::string& s);

/// Relevance gaps for one (topic, model, cohort) cell. At least two finite
/// values are required; the default bandwidth is undefined below that.
struct GapSampleSet {
  std::string topic_label;
  std::string profile_name;
  Cohort cohort = Cohort::false_positive;
  std::vector<double> gaps;
};

/// Gaussian-kernel KDE over a gap sample.
struct DensityEstimate {
  GapSampleSet sample;
  double bandwidth = 0.0;
};

/// Sample standard deviation (n-1 denominator).
double sample_stddev(std::span<const double> values);

/// Silverman's rule: 1.06 * sigma_hat * n^(-1/5).
double silverman_bandwidth(std::span<const double> gaps);

/// Fits the KDE. Without an explicit bandwidth the sample must have positive
/// spread; an all-equal sample raises std::invalid_argument.
DensityEstimate fit_density(GapSampleSet sample, std::optional<double> bandwidth = std::nullopt);

/// Probability mass of the gap density above zero minus the mass below zero,
/// computed in closed form as (1/n) * sum(2*Phi(g_i/h) - 1). The result is
/// strictly inside (-1, 1) for finite bandwidth.
double amplification_index(const DensityEstimate& density);

/// Index on false positives minus index on true negatives.
double amplification_contrast(double index_fp, double index_tn);

/// Pointwise KDE evaluation for external plotting. The grid must be
/// nonempty and sorted ascending.
std::vector<std::pair<double, double>> density_curve(const DensityEstimate& density,
                                                     std::span<const double> grid);

std::vector<double> linspace(double lo, double hi, std::size_t points);

/// Per-topic summary connecting both cohorts. The contrast is present only
/// when both cohorts had enough samples, never coerced to zero.
struct AmplificationResult {
  std::string topic_label;
  std::string profile_name;
  double index_fp = 0.0;
  std::optional<double> index_tn;
  std::optional<double> contrast;
};

}  // namespace modaudit
