#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "balance/features.hpp"
#include "balance/pipeline.hpp"

namespace balance {

using SubjectLabels = std::vector<std::pair<std::string, int>>;

/// Test subjects of each fold. Inner folds split the outer training side of each outer fold.
struct FoldPlan {
  std::uint64_t seed = 0;
  int k_outer = 10;
  int k_inner = 5;
  std::vector<std::vector<std::string>> outer;
  std::vector<std::vector<std::vector<std::string>>> inner;

  /// Subjects of outer fold `fold` that are used for training.
  std::vector<std::string> outer_training(std::size_t fold) const;
  nlohmann::json to_json() const;
  static FoldPlan from_json(const nlohmann::json& j);
};

/// Class-stratified assignment of subjects to k folds: each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped.
std::vector<std::vector<std::string>> stratified_folds(const SubjectLabels& subjects, int k,
                                                       std::uint64_t seed);

FoldPlan make_fold_plan(const SubjectLabels& subjects, int k_outer = 10, int k_inner = 5,
                        std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

struct SearchSpace {
  ModelKind kind = ModelKind::LOGISTIC_L1;
  double logistic_C_lo = 1e-2, logistic_C_hi = 1e4;
  double svm_C_lo = 1e-10, svm_C_hi = 1e0;
  double gamma_lo = 1e-6, gamma_hi = 1e0;
  int k_lo = 1, k_hi = 20;
  int n_selected_lo = 2, n_selected_hi = 8;
  std::vector<ClassWeight> class_weights{ClassWeight::UNIFORM, ClassWeight::BALANCED};

  static SearchSpace defaults(ModelKind kind);
  void validate() const;
  nlohmann::json to_json() const;
};

/// Draws one spec: log-uniform C and gamma, uniform integers, uniform categorical.
ModelSpec sample_spec(const SearchSpace& space, std::mt19937_64& rng);

/// Score of a candidate spec on the inner folds: mean subject accuracy and mean AUC.
struct TrialScore {
  double accuracy = 0.0;
  double auc = 0.0;
};

struct Trial {
  ModelSpec spec;
  TrialScore score;
};

using TrialEvaluator = std::function<TrialScore(const ModelSpec&)>;

struct SearchResult {
  ModelSpec best;
  TrialScore best_score;
  std::vector<Trial> trials;
};

/// Samples `budget` specs, trial t from seed derive_seed(seed, t). The best spec maximises
/// accuracy, then AUC; remaining ties keep the earliest trial.
SearchResult random_search(const SearchSpace& space, int budget, std::uint64_t seed,
                           const TrialEvaluator& evaluate);

// ---------------------------------------------------------------------------
// Voting and metrics
// ---------------------------------------------------------------------------

struct SubjectVote {
  int label = 0;
  double score = 0.0;
};

/// Majority of hard labels; an exact tie goes positive only when the mean score is
/// strictly above `threshold`.
SubjectVote vote_subject(std::span<const Prediction> segments, double threshold);

/// Mann-Whitney AUC, P(s+ > s-) + P(tie)/2 over all pairs.
double auc(std::span<const double> scores, std::span<const int> labels);
/// Area under the empirical ROC by the trapezoid rule (reference implementation).
double auc_trapezoid(std::span<const double> scores, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Nested cross-validation
// ---------------------------------------------------------------------------

/// Called with the raw rows, labels and subject ids handed to every fit.
using FitObserver = std::function<void(const Eigen::MatrixXd& rows, std::span<const int> labels,
                                       std::span<const std::string> subjects)>;

struct CvOptions {
  int budget = 100;
  std::optional<SearchSpace> space;  // defaults for the model kind when empty
  int threads = 1;
  FitObserver observer;
};

struct SubjectPrediction {
  std::string subject_id;
  int fold = 0;
  int label = 0;
  int predicted = 0;
  double score = 0.0;
  std::size_t segments = 0;
};

struct FoldResult {
  int fold = 0;
  ModelSpec spec;
  TrialScore inner_score;
  std::vector<std::size_t> selected;
  std::vector<SubjectPrediction> predictions;
};

struct CvReport {
  ModelKind kind = ModelKind::LOGISTIC_L1;
  FeatureSet feature_set = FeatureSet::INSOLE_ONLY;
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;
  int budget = 0;
  std::vector<FoldResult> folds;
  double accuracy = 0.0;
  double auc = 0.0;
  std::size_t n_subjects = 0;
  std::vector<double> occurrence;  // per feature, fraction of outer folds selecting it

  /// All subject predictions in fold order.
  std::vector<SubjectPrediction> predictions() const;
  nlohmann::json to_json() const;
  static CvReport from_json(const nlohmann::json& j);
};

/// Rows of `m` whose subject is in `ids`.
std::vector<std::size_t> rows_of(const FeatureMatrix& m, std::span<const std::string> ids);

/// Scores specs on the inner folds of one outer fold. The transform and feature ranking
/// of each inner training side are computed once and shared by all trials.
class InnerEvaluator {
 public:
  InnerEvaluator(const FeatureMatrix& m, const FoldPlan& plan, std::size_t fold, bool need_ranking,
                 const FitObserver& observer = {});
  TrialScore operator()(const ModelSpec& spec) const;

 private:
  struct Split {
    PreparedTraining train;
    Eigen::MatrixXd test_rows;
    std::vector<std::size_t> test_subject;  // per test row, index into subjects
    std::vector<int> subject_labels;
  };
  std::vector<Split> splits_;
};

/// Per outer fold: random search over the inner folds, refit on all outer-training rows,
/// majority vote per test subject. Accuracy is pooled over all test subjects.
CvReport run_nested_cv(const FeatureMatrix& m, ModelKind kind, const FoldPlan& plan,
                       const CvOptions& opts = {});

/// The model refitted for `fold` using the spec recorded in the report.
TrainedModel refit_fold(const FeatureMatrix& m, const FoldPlan& plan, const CvReport& report,
                        std::size_t fold);

/// `subject_id,fold,label,predicted,score,segments`.
void write_predictions_csv(const CvReport& report, const std::filesystem::path& path,
                           std::span<const std::string> provenance = {});

}  // namespace balance
