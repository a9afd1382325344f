#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "balance/features.hpp"
#include "balance/recording.hpp"

namespace balance {

/// Average ranks, 1-based; tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> x);

/// Pearson correlation of mid-ranks. Empty when either input has no rank variance.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Studentized range
// ---------------------------------------------------------------------------

struct StudentizedRangeOptions {
  std::size_t draws = 200'000;
  std::uint64_t seed = 0x5EED;
};

struct MonteCarloP {
  double p = 1.0;
  double se = 0.0;
};

/// P(Q >= q) for the range of k standard normals over an independent sqrt(chi2_df / df),
/// estimated from seeded draws. Draw sets are cached per (k, df, draws, seed).
MonteCarloP studentized_range_sf(double q, int k, double df, const StudentizedRangeOptions& opts = {});

struct PairwiseResult {
  std::size_t a = 0, b = 0;  // group indices
  double mean_diff = 0.0;    // mean_a - mean_b
  double q = 0.0;
  double p_adj = 1.0;
  double p_se = 0.0;
};

/// Tukey-Kramer comparisons of every pair of groups.
std::vector<PairwiseResult> tukey_kramer(std::span<const double> means, std::span<const std::size_t> sizes,
                                         double residual_variance, double df,
                                         const StudentizedRangeOptions& opts = {});

/// "**" below 0.01, "*" below 0.05, otherwise empty.
std::string significance(double p);

// ---------------------------------------------------------------------------
// Group tests
// ---------------------------------------------------------------------------

struct GroupComparison {
  std::string feature;
  double F = 0.0;
  double p = 1.0;
  double df_effect = 0.0;
  double df_residual = 0.0;
  double residual_variance = 0.0;
  std::vector<double> adjusted_means;  // group means at the covariate means
  std::vector<PairwiseResult> pairs;
};

/// Linear model with group dummies and covariates; F test of the group terms against the
/// covariates-only model. Pairwise comparisons use adjusted mean differences with their
/// model-based standard errors in the studentized range statistic.
/// `group` holds codes 0..G-1 with every code present.
GroupComparison ancova_group_test(std::span<const double> values, std::span<const int> group,
                                  const Eigen::MatrixXd& covariates,
                                  std::span<const std::string> covariate_names,
                                  const StudentizedRangeOptions& opts = {});

struct TestResult {
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;  // unused for chi-squared
  double p = 1.0;
};

TestResult oneway_anova(std::span<const double> values, std::span<const int> group);

/// Pearson chi-squared test of independence on an r x c table of counts (no continuity correction).
TestResult chi_square(const std::vector<std::vector<double>>& table);

// ---------------------------------------------------------------------------
// Cohort-level analysis
// ---------------------------------------------------------------------------

/// One row per subject: segment-mean CoP measures plus metadata.
struct SubjectSummary {
  SubjectMeta meta;
  std::array<double, kNumCopFeatures> cop{};
  std::size_t segments = 0;
};

std::vector<SubjectSummary> summarize_subjects(std::span<const FeatureRow> rows,
                                               std::span<const SubjectMeta> subjects);

struct StatsReport {
  std::vector<std::string> groups;             // group names, code order
  std::vector<GroupComparison> comparisons;    // one per CoP measure
  std::vector<std::string> variables;          // correlation matrix labels
  std::vector<std::vector<std::optional<double>>> correlation;
  std::vector<std::pair<std::string, TestResult>> demographics;  // Table I style
};

/// ANCOVA per CoP measure with age, sex, weight and height; Spearman matrix over CoP,
/// demographic and neuropsychological variables; ANOVA / chi-squared demographics.
StatsReport analyze_cohort(std::span<const SubjectSummary> subjects, const StudentizedRangeOptions& opts = {});

/// `feature,F,p,pair,mean_diff,p_adj,sig`, one line per pair.
void write_group_tests_csv(const StatsReport& r, const std::filesystem::path& path,
                           std::span<const std::string> provenance = {});
void write_correlation_csv(const StatsReport& r, const std::filesystem::path& path,
                           std::span<const std::string> provenance = {});
void write_demographics_csv(const StatsReport& r, const std::filesystem::path& path,
                            std::span<const std::string> provenance = {});

}  // namespace balance
