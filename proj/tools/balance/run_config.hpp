#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "balance/features.hpp"
#include "balance/pipeline.hpp"
#include "balance/preprocess.hpp"

namespace balance::cli {

inline constexpr const char* kToolVersion = "balance 0.1.0";

struct Task {
  std::string name;
  Group positive = Group::MCI_LB;
  Group negative = Group::CN;

  LabelMap labels() const { return {{positive, 1}, {negative, 0}}; }
};

/// LB_vs_CN, LB_vs_AD, or "<POS>_vs_<NEG>" with full group names (e.g. MCI_AD_vs_CN).
Task parse_task(const std::string& text);

struct RunConfig {
  std::vector<Task> tasks{parse_task("LB_vs_CN")};
  FeatureSet feature_set = FeatureSet::INSOLE_ONLY;
  std::vector<std::string> models{"svm"};
  std::uint64_t seed = 0;
  int budget = 100;
  int threads = 1;
  int k_outer = 10;
  int k_inner = 5;
  std::optional<std::pair<double, double>> svm_C;  // overrides the default SVM C range
  std::size_t shap_samples = 2048;
  std::size_t mc_draws = 200'000;
  PreprocessConfig preprocess;
  FeatureConfig features;
  std::filesystem::path manifest;
  std::filesystem::path features_csv;

  void validate() const;
  /// Every field that influences results; paths and thread count are left out.
  nlohmann::json to_json() const;
  nlohmann::json extraction_json() const;
  /// Applies the fields present in `j` on top of this config.
  void merge(const nlohmann::json& j);

  std::string hash() const;
  std::string extraction_hash() const;
  std::vector<std::string> provenance() const;
  std::vector<std::string> extraction_provenance() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Value of `key=` in provenance lines, if present.
std::optional<std::string> provenance_value(const std::vector<std::string>& lines, const std::string& key);

}  // namespace balance::cli
