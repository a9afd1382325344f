#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "balance/evaluation.hpp"
#include "balance/pipeline.hpp"

namespace balance {

/// Value of a coalition; bit j of the mask set means feature j takes the explained row's value.
using CoalitionValue = std::function<double(std::uint64_t mask)>;
using ScoreFn = std::function<double(std::span<const double>)>;

struct ShapOptions {
  std::size_t exact_max_features = 12;  // enumerate every coalition up to this many features
  std::size_t n_samples = 2048;         // coalitions drawn in sampling mode
  std::uint64_t seed = 0;
  std::size_t max_background = 100;
  int threads = 1;
};

struct ShapResult {
  std::vector<double> phi;
  double base = 0.0;   // value of the empty coalition
  double value = 0.0;  // value of the full coalition, f(x)
  bool exact = true;
};

/// Kernel SHAP over M features: weighted least squares on coalitions with the Shapley
/// kernel, with the empty and full coalitions imposed as constraints.
ShapResult kernel_shap(std::size_t n_features, const CoalitionValue& value, const ShapOptions& opts = {});

/// Absent features take background values; the coalition value averages over background rows.
CoalitionValue background_value(const ScoreFn& f, const Eigen::MatrixXd& background, std::span<const double> x);

ShapResult kernel_shap(const ScoreFn& f, const Eigen::MatrixXd& background, std::span<const double> x,
                       const ShapOptions& opts = {});

/// Closed-form coalition values of an RBF decision function under background imputation.
/// The kernel factorises over features, so background averages of the absent-feature
/// products are tabulated once per model and reused for every explained row.
class RbfCoalitions {
 public:
  RbfCoalitions(const SvmParams& svm, const Eigen::MatrixXd& background);
  /// All 2^M coalition values for one (prepared) row, indexed by mask.
  std::vector<double> values(std::span<const double> x) const;
  std::size_t features() const { return static_cast<std::size_t>(sv_.cols()); }

 private:
  Eigen::MatrixXd sv_;
  Eigen::VectorXd coef_;
  double bias_;
  double gamma_;
  Eigen::MatrixXd absent_;  // [sv][mask of absent features]
};

/// Evenly spaced subsample of at most `cap` rows, first row included.
Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& rows, std::size_t cap);

/// Explains rows of one fitted model in its prepared feature space.
/// Returns one ShapResult per row, with phi indexed like model.selected.
std::vector<ShapResult> explain_rows(const TrainedModel& model, const Eigen::MatrixXd& background_raw,
                                     const Eigen::MatrixXd& rows_raw, const ShapOptions& opts = {});

struct FoldExplanation {
  TrainedModel model;
  Eigen::MatrixXd background;  // raw training rows of the fold
  Eigen::MatrixXd rows;        // raw rows to explain
};

struct ShapSummary {
  std::vector<std::string> feature_names;  // every feature, canonical order
  std::vector<double> occurrence;
  std::vector<double> mean_abs_shap;
  std::vector<bool> retained;   // occurrence >= 0.2
  double base_value = 0.0;      // mean phi_0 over explained rows
  std::size_t n_rows = 0;

  /// Retained features, by descending mean |SHAP|.
  std::vector<std::size_t> ranking() const;
};

inline constexpr double kMinOccurrence = 0.2;

/// Mean |phi| per feature over every explained row of every fold. Features a fold did not
/// select contribute zero for that fold's rows.
ShapSummary summarize_shap(const CvReport& report, std::span<const FoldExplanation> folds,
                           const ShapOptions& opts = {});

/// Refits each fold, explains its test rows against its training rows.
ShapSummary explain_cv(const FeatureMatrix& m, const FoldPlan& plan, const CvReport& report,
                       const ShapOptions& opts = {});

/// `feature,occurrence_rate,mean_abs_shap` for retained features in ranking order.
void write_shap_csv(const ShapSummary& s, const std::filesystem::path& path,
                    std::span<const std::string> provenance = {});

}  // namespace balance
