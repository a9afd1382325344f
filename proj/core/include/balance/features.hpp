#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "balance/preprocess.hpp"
#include "balance/recording.hpp"

namespace balance {

inline constexpr std::size_t kNumCopFeatures = 18;

/// Canonical column order of the CoP measures: 9 positional, then 9 velocity-based.
inline constexpr std::array<std::string_view, kNumCopFeatures> kCopFeatureNames = {
    "range_ml",     "range_ap",     "range_ratio",  "rms_ml",       "rms_ap",
    "sampen_ml",    "sampen_ap",    "hf_ratio_ml",  "hf_ratio_ap",  "avg_speed",
    "avg_speed_ml", "avg_speed_ap", "speed_p10",    "speed_p25",    "speed_p50",
    "speed_p75",    "speed_p90",    "speed_mad"};

inline constexpr std::size_t kFirstVelocityFeature = 9;

inline constexpr std::array<std::string_view, 9> kCovariateNames = {
    "sex", "age", "education", "MMSE", "CDT", "LM_IA", "LM_IIA", "TMT_A", "TMT_B"};

bool is_velocity_feature(std::string_view name);

/// Percentile by linear interpolation between closest ranks (numpy's default).
/// `p` is in [0, 100].
double percentile(std::span<const double> x, double p);
/// Same, on data already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double p);

double percentile_range(std::span<const double> x, double lo = 2.5, double hi = 97.5);

struct SampleEntropyConfig {
  int m = 2;
  double r_factor = 0.2;  // tolerance = r_factor * population SD
};

/// Template-match counts behind sample entropy. Length-m matches are counted twice, once
/// over the templates starting at 0..N-m-1 and once over 1..N-m, and averaged; this keeps
/// the statistic identical for a series and its time reversal.
struct SampleEntropyCounts {
  std::uint64_t a = 0;        // length m+1 matches
  std::uint64_t b_head = 0;   // length m matches, templates 0..N-m-1
  std::uint64_t b_tail = 0;   // length m matches, templates 1..N-m
  std::uint64_t pairs = 0;    // number of template pairs in each count
};

SampleEntropyCounts sample_entropy_counts(std::span<const double> x, int m, double r);

/// -ln(A / B), with B the mean of the two length-m counts.
/// SD == 0 gives 0; A == 0 gives ln(pairs), the largest finite value the statistic can take.
double sample_entropy(std::span<const double> x, const SampleEntropyConfig& cfg = {});

struct WelchConfig {
  std::size_t segment = 64;
  double band_lo = 1.0;
  double band_hi = 5.0;
};

/// One-sided Welch power estimate. Hann-windowed (symmetric) segments of `segment`
/// samples, each mean-removed, spread evenly from the first to the last sample with at
/// least 50% overlap. Returns power per bin k = 0..segment/2 at frequency k*fs/segment.
std::vector<double> welch_psd(std::span<const double> x, double fs, std::size_t segment);

/// Fraction of above-DC power falling in [band_lo, band_hi] Hz, clamped to [0, 1].
double hf_power_ratio(std::span<const double> x, double fs, const WelchConfig& cfg = {});

struct FeatureConfig {
  double range_lo = 2.5;
  double range_hi = 97.5;
  SampleEntropyConfig sampen;
  WelchConfig welch;
};

struct Covariates {
  Sex sex = Sex::F;
  double age = 0.0;
  double education = 0.0;
  std::optional<std::array<double, 6>> neuropsych;
};

struct FeatureRow {
  std::string subject_id;
  std::size_t segment_index = 0;
  std::array<double, kNumCopFeatures> values{};
  bool range_ratio_undefined = false;  // range_ap was 0
  std::optional<Group> group;
  std::optional<Covariates> covariates;
};

FeatureRow compute_features(const Segment& seg, const FeatureConfig& cfg = {});

/// Covariates taken from subject metadata (neuropsych only when all six are present).
Covariates covariates_from(const SubjectMeta& meta);

enum class FeatureSet { INSOLE_ONLY, REFERENCE, HYBRID };
std::string_view to_string(FeatureSet fs);
FeatureSet parse_feature_set(std::string_view text);

/// Segment rows for one modelling task. Row r belongs to subject `subject_ids[r]`.
struct FeatureMatrix {
  FeatureSet feature_set = FeatureSet::INSOLE_ONLY;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd values;  // rows x features
  std::vector<std::string> subject_ids;
  std::vector<std::size_t> segment_index;
  std::vector<int> labels;  // per row, 1 = positive class

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  /// Distinct subjects in first-appearance order with their labels.
  std::vector<std::pair<std::string, int>> subjects() const;
};

using LabelMap = std::map<Group, int>;  // groups absent from the map are dropped

/// Positive = MCI_LB; negative class named by `negative`.
LabelMap task_labels(Group negative);

FeatureMatrix assemble_matrix(std::span<const FeatureRow> rows, FeatureSet feature_set,
                              const LabelMap& label_map);

/// Writes `subject_id,segment_index,label,<18 features>[,<9 covariates>]`. The label column
/// carries the group name. Lines starting with '#' before the header are provenance.
void write_feature_csv(std::span<const FeatureRow> rows, const std::filesystem::path& path,
                       std::span<const std::string> provenance = {});
std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path,
                                         std::vector<std::string>* provenance = nullptr);

}  // namespace balance
