#pragma once

// Boxplot summaries, repeated-measures and between-subjects ANOVA with the
// Greenhouse-Geisser correction, Pearson correlation, and the F / Student
// distribution tails behind their p-values.

#include "echogrid/error.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace echogrid::stats {

/// Raised when an effect has variance but its error term is exactly zero.
struct DegenerateError : DataError {
  using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Distributions

/// Regularized incomplete beta I_x(a, b), continued fraction (Lentz).
double incomplete_beta(double a, double b, double x);

/// P(X <= F) for X ~ F(df1, df2). Degrees of freedom may be fractional.
double f_cdf(double F, double df1, double df2);
/// Upper tail 1 - f_cdf, computed directly to keep precision for large F.
double f_sf(double F, double df1, double df2);

/// Two-sided Student t tail P(|T| >= |t|).
double t_two_sided(double t, double df);

// ---------------------------------------------------------------------------
// Boxplots

/// Linear interpolation between order statistics: h = (n - 1) p.
double quantile_sorted(std::span<const double> sorted, double p);

struct BoxplotSummary {
  std::size_t n = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double mean = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;  // ascending
};

/// Outliers lie strictly more than 1.5 IQR below q1 or above q3; whiskers
/// reach the extreme non-outliers. Throws std::invalid_argument on empty input.
BoxplotSummary boxplot_summary(std::span<const double> data);

// ---------------------------------------------------------------------------
// ANOVA

struct AnovaResult {
  std::string effect;
  double F = 0.0;
  double df1 = 0.0;  // after correction when epsilon is present
  double df2 = 0.0;
  double p = 1.0;
  std::optional<double> epsilon;  // Greenhouse-Geisser, repeated-measures effects only
  double ss_effect = 0.0;
  double ss_error = 0.0;
};

/// Greenhouse-Geisser epsilon of a subjects x k score matrix.
double greenhouse_geisser(const Eigen::Ref<const Eigen::MatrixXd>& scores);

/// Subjects x k conditions. df = (k - 1, (n - 1)(k - 1)), scaled by epsilon.
/// An effect without variance yields F = 0, p = 1.
AnovaResult anova_rm_one(const Eigen::Ref<const Eigen::MatrixXd>& data, std::string effect = "condition");

/// Subjects x (a * b): column i * b + j holds level i of A and level j of B.
/// Returns main A, main B and A x B, each with its own error term.
std::vector<AnovaResult> anova_rm_two(const Eigen::Ref<const Eigen::MatrixXd>& data, int a, int b,
                                      const std::string& name_a = "A", const std::string& name_b = "B");

/// Two between-subjects factors, one value per observation. Type-II sums of
/// squares from nested least-squares fits, so unbalanced cells are allowed;
/// an empty cell throws DesignError.
std::vector<AnovaResult> anova_between_two(std::span<const double> values, std::span<const int> level_a,
                                           std::span<const int> level_b, const std::string& name_a = "A",
                                           const std::string& name_b = "B");

// ---------------------------------------------------------------------------
// Correlation

struct CorrelationResult {
  double r = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Throws DataError for fewer than 3 pairs or a constant series.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided p for a given r and df = n - 2.
double pearson_p(double r, double df);

}  // namespace echogrid::stats
