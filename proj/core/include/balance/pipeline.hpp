#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace balance {

// ---------------------------------------------------------------------------
// Quantile standardisation
// ---------------------------------------------------------------------------

/// Per-feature map through the empirical CDF to a standard normal, clipped to [-3, 3].
class QuantileTransform {
 public:
  static constexpr std::size_t kMaxLandmarks = 1000;
  static constexpr double kClip = 3.0;

  QuantileTransform() = default;

  /// Requires at least 10 rows. Uses min(1000, rows) landmarks per feature.
  static QuantileTransform fit(const Eigen::MatrixXd& rows);

  double transform(std::size_t feature, double value) const;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const;

  std::size_t features() const { return landmarks_.size(); }
  std::size_t landmark_count() const { return references_.size(); }
  const std::vector<double>& landmarks(std::size_t feature) const { return landmarks_[feature]; }
  const std::vector<double>& references() const { return references_; }

  nlohmann::json to_json() const;
  static QuantileTransform from_json(const nlohmann::json& j);

 private:
  std::vector<double> references_;               // CDF levels, linspace(0, 1)
  std::vector<std::vector<double>> landmarks_;   // per feature, non-decreasing
};

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

enum class ModelKind { LOGISTIC_L1, SVM_RBF, KNN };
enum class ClassWeight { UNIFORM, BALANCED };

std::string_view to_string(ModelKind k);
std::string_view to_string(ClassWeight w);
/// Accepts logistic|svm|knn (and the enum spellings). Anything else, GBDT included,
/// raises ParameterError("model not supported: ...").
ModelKind parse_model_kind(std::string_view text);
ClassWeight parse_class_weight(std::string_view text);

struct ModelSpec {
  ModelKind kind = ModelKind::LOGISTIC_L1;
  double C = 1.0;
  double gamma = 0.1;         // SVM only
  ClassWeight class_weight = ClassWeight::UNIFORM;
  int n_neighbors = 5;        // KNN only
  int n_selected = 8;         // SVM and KNN; logistic uses every feature

  bool uses_selection() const { return kind != ModelKind::LOGISTIC_L1; }
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

bool operator==(const ModelSpec& a, const ModelSpec& b);

/// Per-sample weights; "balanced" gives n_total / (2 * n_class).
std::vector<double> class_weights(std::span<const int> labels, ClassWeight mode);

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

struct LogisticOptions {
  double tolerance = 1e-7;   // stop once the objective decreases by less than this
  int max_iterations = 10000;
  /// Called with the objective after every accepted step (test instrumentation).
  std::function<void(double)> on_iteration;
};

struct LogisticFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

/// Objective of the L1-penalised weighted logistic regression:
///   (1/n) * sum_i w_i * log(1 + exp(-s_i * (x_i . beta + b))) + ||beta||_1 / (C * n)
/// with s_i = +1 for label 1 and -1 for label 0. This is the usual
/// "||beta||_1 + C * sum loss" problem divided by C * n; the intercept is not penalised.
double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y,
                          std::span<const double> sample_weight, double C,
                          const Eigen::VectorXd& weights, double intercept);

/// Proximal gradient with backtracking; the objective is non-increasing across iterations.
LogisticFit fit_logistic_l1(const Eigen::MatrixXd& X, std::span<const int> y,
                            std::span<const double> sample_weight, double C,
                            const LogisticOptions& opts = {});

struct SvmOptions {
  double tolerance = 1e-3;  // maximal KKT violation
  long max_iterations = 10'000'000;
};

struct SvmFit {
  Eigen::VectorXd alpha;      // one per training row, 0 <= alpha_i <= C_i
  double bias = 0.0;
  double dual_objective = 0.0;  // sum(alpha) - 0.5 alpha' Q alpha (maximised)
  double max_violation = 0.0;
  long iterations = 0;
};

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma);

/// SMO with second-order working-set selection on the C-SVC dual.
/// `box` holds the per-sample upper bound C_i.
SvmFit fit_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> y,
                    std::span<const double> box, const SvmOptions& opts = {});

// ---------------------------------------------------------------------------
// Trained models
// ---------------------------------------------------------------------------

struct LogisticParams {
  Eigen::VectorXd weights;
  double intercept = 0.0;
};

struct SvmParams {
  Eigen::MatrixXd support_vectors;  // transformed, selected features
  Eigen::VectorXd coef;             // alpha_i * y_i (y in {-1, +1})
  double bias = 0.0;
  double gamma = 0.1;
};

struct KnnParams {
  Eigen::MatrixXd rows;   // transformed, selected features
  std::vector<int> labels;
  int k = 5;
};

struct Prediction {
  double score = 0.0;
  int label = 0;
};

struct TrainedModel {
  ModelSpec spec;
  QuantileTransform transform;
  std::vector<std::size_t> selected;  // indices into the raw feature vector
  std::variant<LogisticParams, SvmParams, KnnParams> params;

  /// Score threshold separating the two hard labels (0.5, or 0 for SVM decision values).
  double threshold() const;

  /// Raw feature row -> model input (transform, then selection).
  Eigen::VectorXd prepare(std::span<const double> raw) const;
  Eigen::MatrixXd prepare(const Eigen::MatrixXd& raw) const;

  /// Score and label for an already prepared row.
  Prediction predict_prepared(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
};

/// Logistic: sigmoid(w.x + b), label at 0.5. SVM: decision value, label at 0.
/// KNN: positive-neighbour fraction; exact ties go to the class whose neighbours are
/// nearer on average.
Prediction predict_score(const TrainedModel& model, std::span<const double> raw_row);
std::vector<Prediction> predict_scores(const TrainedModel& model, const Eigen::MatrixXd& raw_rows);
/// Same, for rows that already went through `model.transform` (all features, before selection).
std::vector<Prediction> predict_transformed(const TrainedModel& model, const Eigen::MatrixXd& transformed);

/// Features ranked by descending |coefficient| of an L1 logistic fit (C = 1, balanced);
/// ties keep canonical order.
std::vector<std::size_t> rank_features_l1(const Eigen::MatrixXd& transformed, std::span<const int> labels);

/// Transform fitted on training rows plus everything that does not depend on the
/// hyperparameters, so that many specs can be fitted on one training partition.
struct PreparedTraining {
  QuantileTransform transform;
  Eigen::MatrixXd transformed;
  std::vector<int> labels;
  std::vector<std::size_t> ranking;  // empty unless computed
};

PreparedTraining prepare_training(const Eigen::MatrixXd& raw, std::span<const int> labels,
                                  bool need_ranking);

TrainedModel fit(const ModelSpec& spec, const PreparedTraining& prepared);
TrainedModel fit(const ModelSpec& spec, const Eigen::MatrixXd& raw, std::span<const int> labels);

inline constexpr std::string_view kModelFormat = "balance-model/1";

}  // namespace balance
