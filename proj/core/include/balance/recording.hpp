#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace balance {

enum class Group { MCI_LB, MCI_AD, CN, UNKNOWN };
enum class Sex { F, M };

std::string_view to_string(Group g);
std::string_view to_string(Sex s);
Group parse_group(std::string_view text);
Sex parse_sex(std::string_view text);

/// Neuropsychological instruments recorded alongside the balance test.
enum class Neuropsych { MMSE, CDT, LM_IA, LM_IIA, TMT_A, TMT_B };
inline constexpr std::array<Neuropsych, 6> kNeuropsychTests = {
    Neuropsych::MMSE, Neuropsych::CDT, Neuropsych::LM_IA,
    Neuropsych::LM_IIA, Neuropsych::TMT_A, Neuropsych::TMT_B};
std::string_view to_string(Neuropsych n);
Neuropsych parse_neuropsych(std::string_view text);

struct SubjectMeta {
  std::string id;
  Group group = Group::UNKNOWN;
  Sex sex = Sex::F;
  double age = 0.0;        // years
  double education = 0.0;  // years
  double height = 0.0;     // cm
  double weight = 0.0;     // kg
  std::map<Neuropsych, double> neuropsych;

  bool has_full_neuropsych() const { return neuropsych.size() == kNeuropsychTests.size(); }
};

/// Throws ValidationError when a field is outside its admissible range.
void check_invariants(const SubjectMeta& meta);

/// One sample of the bilateral insole export: per-foot CoP (mm) and total force.
struct Frame {
  double l_ml = 0.0;
  double l_ap = 0.0;
  double l_force = 0.0;
  double r_ml = 0.0;
  double r_ap = 0.0;
  double r_force = 0.0;
};

inline constexpr std::size_t kMinFrames = 150;

struct RawRecording {
  SubjectMeta subject;
  double sample_rate = 50.0;    // Hz
  double insole_width = 85.0;   // mm
  std::vector<Frame> frames;

  double duration() const { return static_cast<double>(frames.size()) / sample_rate; }
};

/// Throws TooShortError / ValidationError when the recording violates its invariants.
void check_invariants(const RawRecording& rec);

struct Cohort {
  std::vector<RawRecording> recordings;
  std::string provenance;

  std::size_t size() const { return recordings.size(); }
  const RawRecording* find(std::string_view subject_id) const;
};

struct ValidationReport {
  std::vector<std::size_t> zero_force_frames;
  /// Half-open [first, last) frame ranges containing at least one non-finite value.
  std::vector<std::pair<std::size_t, std::size_t>> nan_runs;

  bool ok() const { return zero_force_frames.empty() && nan_runs.empty(); }
};

ValidationReport validate_recording(const RawRecording& rec);

/// Reads a recording CSV. Sample rate and insole width come from the `#` header line.
RawRecording load_recording(const std::filesystem::path& path, SubjectMeta meta);

/// Writes the recording CSV with 6 significant digits per value.
void write_recording(const RawRecording& rec, const std::filesystem::path& path);

/// Entry of a cohort manifest; the recording path is relative to the manifest directory.
struct ManifestEntry {
  SubjectMeta meta;
  std::filesystem::path recording;
};

struct Manifest {
  std::string provenance;
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Loads every recording listed in the manifest, in manifest order.
Cohort load_cohort(const std::filesystem::path& manifest_path);

}  // namespace balance
