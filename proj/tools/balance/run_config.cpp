#include "run_config.hpp"

#include <cstdio>
#include <fstream>

#include "balance/error.hpp"
#include "balance/text.hpp"

namespace balance::cli {

Task parse_task(const std::string& text) {
  if (text == "LB_vs_CN") return {text, Group::MCI_LB, Group::CN};
  if (text == "LB_vs_AD") return {text, Group::MCI_LB, Group::MCI_AD};
  const auto pos = text.find("_vs_");
  if (pos == std::string::npos) {
    throw ParameterError("unknown task '" + text + "' (expected LB_vs_CN, LB_vs_AD or <GROUP>_vs_<GROUP>)");
  }
  Task t{text, parse_group(text.substr(0, pos)), parse_group(text.substr(pos + 4))};
  if (t.positive == t.negative) throw ParameterError("task '" + text + "' compares a group with itself");
  return t;
}

void RunConfig::validate() const {
  if (tasks.empty()) throw ParameterError("no task requested");
  if (models.empty()) throw ParameterError("no model requested");
  for (const auto& m : models) parse_model_kind(m);
  if (budget < 1) throw ParameterError("search budget must be at least 1");
  if (threads < 1) throw ParameterError("thread count must be at least 1");
  if (k_outer < 2 || k_inner < 2) throw ParameterError("fold counts must be at least 2");
  if (svm_C && !(svm_C->first > 0.0 && svm_C->second >= svm_C->first)) {
    throw ParameterError("SVM C range must satisfy 0 < lo <= hi");
  }
  if (shap_samples < 2) throw ParameterError("shap_samples must be at least 2");
  if (mc_draws < 1000) throw ParameterError("mc_draws must be at least 1000");
  const auto& p = preprocess;
  if (p.expected_rate != 50.0) throw ParameterError("only 50 Hz recordings are supported");
  if (!(p.noise_cutoff > 0.0 && p.noise_cutoff < p.expected_rate / 2)) {
    throw ParameterError("noise cutoff must lie in (0, Nyquist)");
  }
  if (!(p.smooth_cutoff > 0.0 && p.smooth_cutoff < p.expected_rate / 2)) {
    throw ParameterError("smoothing cutoff must lie in (0, Nyquist)");
  }
  if (p.filter_order < 1 || p.filter_order > 12) throw ParameterError("filter order must be in [1, 12]");
  if (p.sg_window < 3 || p.sg_window % 2 == 0 || p.sg_order < 1 || p.sg_order >= p.sg_window) {
    throw ParameterError("Savitzky-Golay window must be odd and larger than the order");
  }
  if (p.window < 10 || p.stride < 1) throw ParameterError("segment window/stride out of range");
  const auto& f = features;
  if (f.sampen.m < 1 || f.sampen.m > 10 || !(f.sampen.r_factor > 0.0)) {
    throw ParameterError("sample entropy m must be in [1, 10] and r positive");
  }
  if (!(f.welch.band_lo >= 0.0 && f.welch.band_hi > f.welch.band_lo && f.welch.band_hi <= p.expected_rate / 2)) {
    throw ParameterError("band edges must satisfy 0 <= lo < hi <= Nyquist");
  }
  if (f.welch.segment < 8 || f.welch.segment > p.window) {
    throw ParameterError("Welch segment must be between 8 and the segment window");
  }
}

nlohmann::json RunConfig::extraction_json() const {
  const auto& p = preprocess;
  const auto& f = features;
  return {{"sample_rate", p.expected_rate},
          {"noise_cutoff", p.noise_cutoff},
          {"smooth_cutoff", p.smooth_cutoff},
          {"filter_order", p.filter_order},
          {"sg_order", p.sg_order},
          {"sg_window", p.sg_window},
          {"foot_gap", p.foot_gap},
          {"window", p.window},
          {"stride", p.stride},
          {"range_lo", f.range_lo},
          {"range_hi", f.range_hi},
          {"sampen_m", f.sampen.m},
          {"sampen_r", f.sampen.r_factor},
          {"welch_segment", f.welch.segment},
          {"band_lo", f.welch.band_lo},
          {"band_hi", f.welch.band_hi}};
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  std::vector<std::string> task_names;
  for (const auto& t : tasks) task_names.push_back(t.name);
  j["tasks"] = task_names;
  j["feature_set"] = std::string(to_string(feature_set));
  j["models"] = models;
  j["seed"] = seed;
  j["budget"] = budget;
  j["k_outer"] = k_outer;
  j["k_inner"] = k_inner;
  if (svm_C) j["svm_C"] = {svm_C->first, svm_C->second};
  j["shap_samples"] = shap_samples;
  j["mc_draws"] = mc_draws;
  j["extraction"] = extraction_json();
  return j;
}

void RunConfig::merge(const nlohmann::json& j) {
  try {
    if (j.contains("task")) tasks = {parse_task(j["task"].get<std::string>())};
    if (j.contains("tasks")) {
      tasks.clear();
      for (const auto& t : j["tasks"]) tasks.push_back(parse_task(t.get<std::string>()));
    }
    if (j.contains("feature_set")) feature_set = parse_feature_set(j["feature_set"].get<std::string>());
    if (j.contains("model")) models = {j["model"].get<std::string>()};
    if (j.contains("models")) models = j["models"].get<std::vector<std::string>>();
    seed = j.value("seed", seed);
    budget = j.value("budget", budget);
    threads = j.value("threads", threads);
    k_outer = j.value("k_outer", k_outer);
    k_inner = j.value("k_inner", k_inner);
    if (j.contains("svm_C")) {
      const auto r = j["svm_C"].get<std::vector<double>>();
      if (r.size() != 2) throw ParameterError("svm_C must be [lo, hi]");
      svm_C = std::pair{r[0], r[1]};
    }
    shap_samples = j.value("shap_samples", shap_samples);
    mc_draws = j.value("mc_draws", mc_draws);
    if (j.contains("manifest")) manifest = j["manifest"].get<std::string>();
    if (j.contains("features")) features_csv = j["features"].get<std::string>();
    if (j.contains("extraction")) {
      const auto& e = j["extraction"];
      auto& p = preprocess;
      auto& f = features;
      p.expected_rate = e.value("sample_rate", p.expected_rate);
      p.noise_cutoff = e.value("noise_cutoff", p.noise_cutoff);
      p.smooth_cutoff = e.value("smooth_cutoff", p.smooth_cutoff);
      p.filter_order = e.value("filter_order", p.filter_order);
      p.sg_order = e.value("sg_order", p.sg_order);
      p.sg_window = e.value("sg_window", p.sg_window);
      p.foot_gap = e.value("foot_gap", p.foot_gap);
      p.window = e.value("window", p.window);
      p.stride = e.value("stride", p.stride);
      f.range_lo = e.value("range_lo", f.range_lo);
      f.range_hi = e.value("range_hi", f.range_hi);
      f.sampen.m = e.value("sampen_m", f.sampen.m);
      f.sampen.r_factor = e.value("sampen_r", f.sampen.r_factor);
      f.welch.segment = e.value("welch_segment", f.welch.segment);
      f.welch.band_lo = e.value("band_lo", f.welch.band_lo);
      f.welch.band_hi = e.value("band_hi", f.welch.band_hi);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed run config: ") + e.what());
  }
}

namespace {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string RunConfig::hash() const { return hex64(detail::fnv1a(to_json().dump())); }
std::string RunConfig::extraction_hash() const { return hex64(detail::fnv1a(extraction_json().dump())); }

std::vector<std::string> RunConfig::provenance() const {
  return {std::string("tool=") + kToolVersion, "seed=" + std::to_string(seed), "config_hash=" + hash(),
          "extraction_hash=" + extraction_hash()};
}

std::vector<std::string> RunConfig::extraction_provenance() const {
  return {std::string("tool=") + kToolVersion, "extraction_hash=" + extraction_hash()};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  cfg.merge(j);
  const auto base = path.parent_path();
  if (!cfg.manifest.empty() && cfg.manifest.is_relative()) cfg.manifest = base / cfg.manifest;
  if (!cfg.features_csv.empty() && cfg.features_csv.is_relative()) cfg.features_csv = base / cfg.features_csv;
  return cfg;
}

std::optional<std::string> provenance_value(const std::vector<std::string>& lines, const std::string& key) {
  const std::string prefix = key + "=";
  for (const auto& line : lines) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return std::nullopt;
}

}  // namespace balance::cli
