#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "balance/features.hpp"
#include "run_config.hpp"

namespace balance::cli {

/// A processing failure tagged with the pipeline stage it came from.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

struct ExtractLogLine {
  std::string subject_id;
  std::size_t frames = 0;
  std::size_t segments = 0;
  std::size_t interpolated = 0;
  std::string status;
};

struct Extraction {
  std::vector<FeatureRow> rows;
  std::vector<SubjectMeta> subjects;  // successfully processed, manifest order
  std::vector<ExtractLogLine> log;
};

Extraction extract_manifest(const RunConfig& cfg, const std::filesystem::path& manifest, bool skip_bad);

struct SimulateArgs {
  std::optional<std::filesystem::path> profile;
  std::string preset = "separable";
  std::size_t subjects = 30;
  std::optional<std::uint64_t> seed;
};

void cmd_simulate(const SimulateArgs& args, const RunConfig& cfg, const std::filesystem::path& out);
void cmd_extract(const RunConfig& cfg, const std::filesystem::path& out, bool skip_bad);
void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& out, bool skip_bad);
void cmd_explain(const RunConfig& cfg, const std::filesystem::path& run_dir, const std::filesystem::path& out);
void cmd_stats(const RunConfig& cfg, const std::filesystem::path& out, bool skip_bad);

}  // namespace balance::cli
