#include "balance/recording.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/log.hpp"
#include "balance/text.hpp"

namespace balance {

namespace {

constexpr std::string_view kRecordingHeader =
    "time_s,l_ml_mm,l_ap_mm,l_force,r_ml_mm,r_ap_mm,r_force";

constexpr std::array<std::string_view, 7> kColumns = {
    "time_s", "l_ml_mm", "l_ap_mm", "l_force", "r_ml_mm", "r_ap_mm", "r_force"};

void parse_header_comment(std::string_view line, double& rate, double& width,
                          bool& have_rate, std::size_t line_no) {
  line.remove_prefix(1);  // '#'
  for (auto token : detail::split_any(line, " \t,;")) {
    auto eq = token.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = detail::trim(token.substr(0, eq));
    auto value = detail::trim(token.substr(eq + 1));
    double parsed = 0.0;
    if (key == "sample_rate_hz" || key == "insole_width_mm") {
      if (!detail::parse_double(value, parsed)) {
        throw ParseError("cannot parse header value '" + std::string(value) + "' for " +
                             std::string(key),
                         line_no);
      }
      if (key == "sample_rate_hz") {
        rate = parsed;
        have_rate = true;
      } else {
        width = parsed;
      }
    }
  }
}

}  // namespace

std::string_view to_string(Group g) {
  switch (g) {
    case Group::MCI_LB: return "MCI_LB";
    case Group::MCI_AD: return "MCI_AD";
    case Group::CN: return "CN";
    case Group::UNKNOWN: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::string_view to_string(Sex s) { return s == Sex::F ? "F" : "M"; }

Group parse_group(std::string_view text) {
  if (text == "MCI_LB" || text == "MCI-LB") return Group::MCI_LB;
  if (text == "MCI_AD" || text == "MCI-AD") return Group::MCI_AD;
  if (text == "CN") return Group::CN;
  if (text == "UNKNOWN") return Group::UNKNOWN;
  throw ParseError("unknown group '" + std::string(text) + "'");
}

Sex parse_sex(std::string_view text) {
  if (text == "F" || text == "f") return Sex::F;
  if (text == "M" || text == "m") return Sex::M;
  throw ParseError("unknown sex '" + std::string(text) + "'");
}

std::string_view to_string(Neuropsych n) {
  switch (n) {
    case Neuropsych::MMSE: return "MMSE";
    case Neuropsych::CDT: return "CDT";
    case Neuropsych::LM_IA: return "LM_IA";
    case Neuropsych::LM_IIA: return "LM_IIA";
    case Neuropsych::TMT_A: return "TMT_A";
    case Neuropsych::TMT_B: return "TMT_B";
  }
  return "MMSE";
}

Neuropsych parse_neuropsych(std::string_view text) {
  for (auto n : kNeuropsychTests) {
    if (to_string(n) == text) return n;
  }
  throw ParseError("unknown neuropsychological measure '" + std::string(text) + "'");
}

void check_invariants(const SubjectMeta& meta) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("subject '" + meta.id + "': " + what);
  };
  if (meta.id.empty()) throw ValidationError("subject id is empty");
  if (!(meta.age > 0.0 && meta.age <= 120.0)) fail("age out of range (0, 120]");
  if (!(meta.height > 50.0 && meta.height <= 250.0)) fail("height out of range (50, 250]");
  if (!(meta.weight > 20.0 && meta.weight <= 200.0)) fail("weight out of range (20, 200]");
  if (!std::isfinite(meta.education) || meta.education < 0.0) fail("education must be finite and >= 0");
  for (const auto& [test, score] : meta.neuropsych) {
    if (!std::isfinite(score)) fail(std::string(to_string(test)) + " score is not finite");
  }
}

void check_invariants(const RawRecording& rec) {
  if (!(rec.sample_rate > 0.0) || !std::isfinite(rec.sample_rate)) {
    throw ValidationError("sample rate must be positive");
  }
  if (rec.frames.size() < kMinFrames) {
    throw TooShortError("recording for '" + rec.subject.id + "' has " +
                        std::to_string(rec.frames.size()) + " frames; at least " +
                        std::to_string(kMinFrames) + " required");
  }
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    for (double v : {f.l_ml, f.l_ap, f.l_force, f.r_ml, f.r_ap, f.r_force}) {
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite value at frame " + std::to_string(i));
      }
    }
    if (f.l_force < 0.0 || f.r_force < 0.0) {
      throw ValidationError("negative force at frame " + std::to_string(i));
    }
  }
}

const RawRecording* Cohort::find(std::string_view subject_id) const {
  for (const auto& r : recordings) {
    if (r.subject.id == subject_id) return &r;
  }
  return nullptr;
}

ValidationReport validate_recording(const RawRecording& rec) {
  ValidationReport report;
  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    bool finite = true;
    for (double v : {f.l_ml, f.l_ap, f.l_force, f.r_ml, f.r_ap, f.r_force}) {
      finite = finite && std::isfinite(v);
    }
    if (!finite) {
      if (!in_run) {
        run_start = i;
        in_run = true;
      }
    } else if (in_run) {
      report.nan_runs.emplace_back(run_start, i);
      in_run = false;
    }
    if (finite && f.l_force + f.r_force == 0.0) report.zero_force_frames.push_back(i);
  }
  if (in_run) report.nan_runs.emplace_back(run_start, rec.frames.size());
  return report;
}

RawRecording load_recording(const std::filesystem::path& path, SubjectMeta meta) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open recording '" + path.string() + "'");

  RawRecording rec;
  rec.subject = std::move(meta);
  bool have_rate = false;
  bool have_columns = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      parse_header_comment(view, rec.sample_rate, rec.insole_width, have_rate, line_no);
      continue;
    }
    if (!have_columns) {
      if (view != kRecordingHeader) {
        throw ParseError("expected column header '" + std::string(kRecordingHeader) + "'", line_no);
      }
      have_columns = true;
      continue;
    }
    auto cells = detail::split(view, ',');
    if (cells.size() != kColumns.size()) {
      throw ParseError("expected " + std::to_string(kColumns.size()) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    std::array<double, 7> v{};
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(detail::trim(cells[c]), v[c])) {
        throw ParseError("cannot parse column " + std::string(kColumns[c]), line_no);
      }
      if (!std::isfinite(v[c])) {
        throw ValidationError("non-finite value in column " + std::string(kColumns[c]) +
                              " at line " + std::to_string(line_no));
      }
    }
    if (v[3] < 0.0 || v[6] < 0.0) {
      throw ValidationError(std::string("negative force in column ") +
                            (v[3] < 0.0 ? "l_force" : "r_force") + " at line " +
                            std::to_string(line_no));
    }
    rec.frames.push_back({v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  if (!have_rate) {
    throw ParseError("recording '" + path.string() + "' lacks a sample_rate_hz header");
  }
  if (!have_columns) throw ParseError("recording '" + path.string() + "' has no column header");
  check_invariants(rec);
  return rec;
}

void write_recording(const RawRecording& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write recording '" + path.string() + "'");
  out << "# sample_rate_hz=" << detail::format_sig(rec.sample_rate, 6)
      << " insole_width_mm=" << detail::format_sig(rec.insole_width, 6)
      << " subject=" << rec.subject.id << '\n';
  out << kRecordingHeader << '\n';
  std::string row;
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    row.clear();
    row += detail::format_sig(static_cast<double>(i) / rec.sample_rate, 6);
    for (double v : {f.l_ml, f.l_ap, f.l_force, f.r_ml, f.r_ap, f.r_force}) {
      row += ',';
      row += detail::format_sig(v, 6);
    }
    out << row << '\n';
  }
}

namespace {

nlohmann::json meta_to_json(const SubjectMeta& m) {
  nlohmann::json j;
  j["id"] = m.id;
  j["group"] = std::string(to_string(m.group));
  j["sex"] = std::string(to_string(m.sex));
  j["age"] = m.age;
  j["education"] = m.education;
  j["height"] = m.height;
  j["weight"] = m.weight;
  if (!m.neuropsych.empty()) {
    nlohmann::json np = nlohmann::json::object();
    for (const auto& [k, v] : m.neuropsych) np[std::string(to_string(k))] = v;
    j["neuropsych"] = np;
  }
  return j;
}

template <typename T>
T require_field(const nlohmann::json& j, const char* key, std::size_t index) {
  if (!j.contains(key)) {
    throw ParseError("manifest entry " + std::to_string(index) + " lacks field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("manifest entry " + std::to_string(index) + " field '" + key +
                     "' has the wrong type");
  }
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  Manifest manifest;
  manifest.provenance = root.value("provenance", std::string{});
  if (!root.contains("subjects") || !root["subjects"].is_array()) {
    throw ParseError("manifest '" + path.string() + "' lacks a 'subjects' array");
  }
  std::size_t index = 0;
  for (const auto& s : root["subjects"]) {
    ManifestEntry entry;
    auto& m = entry.meta;
    m.id = require_field<std::string>(s, "id", index);
    m.group = parse_group(require_field<std::string>(s, "group", index));
    m.sex = parse_sex(require_field<std::string>(s, "sex", index));
    m.age = require_field<double>(s, "age", index);
    m.education = require_field<double>(s, "education", index);
    m.height = require_field<double>(s, "height", index);
    m.weight = require_field<double>(s, "weight", index);
    if (s.contains("neuropsych") && !s["neuropsych"].is_null()) {
      for (const auto& [key, value] : s["neuropsych"].items()) {
        if (!value.is_number()) {
          throw ParseError("manifest entry " + std::to_string(index) + " neuropsych '" + key +
                           "' is not a number");
        }
        m.neuropsych[parse_neuropsych(key)] = value.get<double>();
      }
    }
    entry.recording = require_field<std::string>(s, "recording", index);
    manifest.entries.push_back(std::move(entry));
    ++index;
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json root;
  root["format"] = "balance-manifest/1";
  root["provenance"] = manifest.provenance;
  root["subjects"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    auto j = meta_to_json(e.meta);
    j["recording"] = e.recording.generic_string();
    root["subjects"].push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << root.dump(2) << '\n';
}

Cohort load_cohort(const std::filesystem::path& manifest_path) {
  Manifest manifest = read_manifest(manifest_path);
  Cohort cohort;
  cohort.provenance = manifest.provenance;
  if (manifest.entries.empty()) {
    warn("manifest '" + manifest_path.string() + "' lists no subjects");
    return cohort;
  }
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.meta.id).second) {
      throw ValidationError("duplicate subject id '" + e.meta.id + "' in manifest");
    }
  }
  const auto base = manifest_path.parent_path();
  for (auto& e : manifest.entries) {
    check_invariants(e.meta);
    auto path = e.recording.is_absolute() ? e.recording : base / e.recording;
    if (!std::filesystem::exists(path)) {
      throw DataError("recording file '" + path.string() + "' for subject '" + e.meta.id +
                      "' does not exist");
    }
    cohort.recordings.push_back(load_recording(path, e.meta));
  }
  return cohort;
}

}  // namespace balance
