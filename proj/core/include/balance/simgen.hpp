#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "balance/recording.hpp"

namespace balance {

/// Quiet-stance sway as a 2-D Ornstein-Uhlenbeck process per foot.
struct SwayParams {
  double lambda = 1.0;        // restoring rate, 1/s
  double sigma = 6.0;         // ML noise scale, mm/sqrt(s)
  double anisotropy = 1.3;    // AP sigma = sigma * anisotropy
  double shared = 0.8;        // fraction of innovation variance common to both feet
  double baseline_force = 350.0;
  double force_noise = 0.01;  // relative SD of per-frame force noise
  double asymmetry = 0.05;    // left = baseline (1 + a), right = baseline (1 - a)
  double duration = 30.0;     // s
  std::uint64_t seed = 0;

  void validate() const;
};

struct NormalDraw {
  double mean = 0.0;
  double sd = 0.0;
};

struct GroupProfile {
  Group group = Group::CN;
  std::size_t n_subjects = 30;
  SwayParams sway;
  double lambda_log_sd = 0.1;  // per-subject log-normal spread around the group values
  double sigma_log_sd = 0.1;
  NormalDraw age{75.0, 6.0};
  NormalDraw education{12.0, 3.0};
  NormalDraw height{158.0, 8.0};
  NormalDraw weight{56.0, 9.0};
  double female_fraction = 0.55;
  /// Neuropsychological scores; subjects get none when empty.
  std::map<Neuropsych, NormalDraw> neuropsych;

  void validate() const;
};

inline constexpr double kSimSampleRate = 50.0;

RawRecording generate_recording(const SwayParams& p, double insole_width = 85.0);

struct CohortSpec {
  std::vector<GroupProfile> profiles;
  std::uint64_t seed = 0;
  double insole_width = 85.0;
  int threads = 1;

  nlohmann::json to_json() const;
  static CohortSpec from_json(const nlohmann::json& j);
};

/// Draws every subject, writes `recordings/<id>.csv` and `manifest.json` under `out_dir`
/// and returns the cohort. Subject seeds derive from (seed, subject index).
Cohort generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir);

/// Built-in cohorts, `n` subjects per group:
///   separable - CN at the default sway, MCI_LB with 1.5x sigma and 2.25x lambda, so the
///               stationary positional SD matches while velocities differ;
///   null      - CN and MCI_LB with identical parameters;
///   null3     - MCI_LB, MCI_AD and CN with identical parameters.
CohortSpec sway_preset(std::string_view name, std::size_t n, std::uint64_t seed);

/// Subject parameters and metadata without writing anything.
struct SimSubject {
  SubjectMeta meta;
  SwayParams sway;
};
std::vector<SimSubject> draw_subjects(const CohortSpec& spec);

}  // namespace balance
