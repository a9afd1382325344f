#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "balance/error.hpp"
#include "balance/log.hpp"
#include "balance/recording.hpp"
#include "balance/simgen.hpp"
#include "fixtures.hpp"

using namespace balance;

namespace {

void write_raw(const std::filesystem::path& p, std::size_t rows, const std::string& bad_row = "", std::size_t bad_at = 0) {
  std::ofstream out(p);
  out << "# sample_rate_hz=50 insole_width_mm=85\n";
  out << "time_s,l_ml_mm,l_ap_mm,l_force,r_ml_mm,r_ap_mm,r_force\n";
  for (std::size_t i = 0; i < rows; ++i) {
    if (!bad_row.empty() && i == bad_at) {
      out << bad_row << '\n';
      continue;
    }
    out << i / 50.0 << ",1.5,-2,300,0.5,1,310\n";
  }
}

struct CaptureWarnings {
  std::vector<std::string> seen;
  WarningSink previous;
  CaptureWarnings() {
    previous = set_warning_sink([this](std::string_view m) { seen.emplace_back(m); });
  }
  ~CaptureWarnings() { set_warning_sink(previous); }
};

}  // namespace

TEST(Recording, LoadsWellFormedFile) {
  fixture::TempDir dir("rec");
  write_raw(dir / "a.csv", 1500);
  const auto rec = load_recording(dir / "a.csv", fixture::meta("S001"));
  EXPECT_EQ(rec.frames.size(), 1500u);
  EXPECT_DOUBLE_EQ(rec.duration(), 30.0);
  EXPECT_DOUBLE_EQ(rec.sample_rate, 50.0);
  EXPECT_DOUBLE_EQ(rec.frames[3].r_force, 310.0);
}

TEST(Recording, RejectsShortFile) {
  fixture::TempDir dir("rec");
  write_raw(dir / "a.csv", 149);
  EXPECT_THROW(load_recording(dir / "a.csv", fixture::meta("S001")), TooShortError);
}

TEST(Recording, NegativeForceNamesColumnAndLine) {
  fixture::TempDir dir("rec");
  write_raw(dir / "a.csv", 200, "0.2,1,1,-5,1,1,300", 10);
  try {
    load_recording(dir / "a.csv", fixture::meta("S001"));
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("l_force"), std::string::npos) << what;
    EXPECT_NE(what.find("13"), std::string::npos) << what;
  }
}

TEST(Recording, MalformedRowReportsLine) {
  fixture::TempDir dir("rec");
  write_raw(dir / "a.csv", 200, "0.2,1,abc,300,1,1,300", 4);
  try {
    load_recording(dir / "a.csv", fixture::meta("S001"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
}

TEST(Recording, NonFiniteValueIsValidationError) {
  fixture::TempDir dir("rec");
  write_raw(dir / "a.csv", 200, "0.2,nan,1,300,1,1,300", 4);
  EXPECT_THROW(load_recording(dir / "a.csv", fixture::meta("S001")), ValidationError);
}

TEST(Recording, RoundTripKeepsSixSignificantDigits) {
  fixture::TempDir dir("rec");
  SwayParams p;
  p.seed = 3;
  auto rec = generate_recording(p);
  rec.subject = fixture::meta("S001");
  write_recording(rec, dir / "r.csv");
  const auto back = load_recording(dir / "r.csv", rec.subject);
  ASSERT_EQ(back.frames.size(), rec.frames.size());
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& a = rec.frames[i];
    const auto& b = back.frames[i];
    for (auto [x, y] : {std::pair{a.l_ml, b.l_ml}, {a.l_ap, b.l_ap}, {a.l_force, b.l_force},
                        {a.r_ml, b.r_ml}, {a.r_ap, b.r_ap}, {a.r_force, b.r_force}}) {
      EXPECT_NEAR(x, y, 5e-6 * std::abs(x) + 1e-300);
    }
  }
}

TEST(Recording, ValidationFlagsZeroForceFrames) {
  auto rec = fixture::recording(std::vector<double>(200, 0.0), std::vector<double>(200, 0.0));
  EXPECT_TRUE(validate_recording(rec).ok());
  for (std::size_t i : {5u, 6u, 90u}) rec.frames[i].l_force = rec.frames[i].r_force = 0.0;
  const auto report = validate_recording(rec);
  EXPECT_EQ(report.zero_force_frames, (std::vector<std::size_t>{5, 6, 90}));
  rec.frames[100].l_ml = std::numeric_limits<double>::quiet_NaN();
  rec.frames[101].l_ml = std::numeric_limits<double>::quiet_NaN();
  const auto r2 = validate_recording(rec);
  ASSERT_EQ(r2.nan_runs.size(), 1u);
  EXPECT_EQ(r2.nan_runs[0], (std::pair<std::size_t, std::size_t>{100, 102}));
}

TEST(Recording, SimulatedRecordingHasNoIssues) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SwayParams p;
    p.seed = seed;
    p.force_noise = 0.3;
    EXPECT_TRUE(validate_recording(generate_recording(p)).ok());
  }
}

TEST(Cohort, LoadsInManifestOrder) {
  fixture::TempDir dir("cohort");
  Manifest m;
  for (const char* id : {"S003", "S001", "S002"}) {
    write_raw(dir / (std::string(id) + ".csv"), 300);
    m.entries.push_back({fixture::meta(id), std::string(id) + ".csv"});
  }
  write_manifest(m, dir / "manifest.json");
  const auto c = load_cohort(dir / "manifest.json");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.recordings[0].subject.id, "S003");
  EXPECT_EQ(c.recordings[2].subject.id, "S002");
  EXPECT_NE(c.find("S001"), nullptr);
  EXPECT_EQ(c.find("S999"), nullptr);
}

TEST(Cohort, Table1SizedManifest) {
  fixture::TempDir dir("cohort");
  CohortSpec spec = sway_preset("null3", 1, 9);
  spec.profiles[0].n_subjects = 14;
  spec.profiles[1].n_subjects = 38;
  spec.profiles[2].n_subjects = 46;
  generate_cohort(spec, dir.path());
  const auto c = load_cohort(dir / "manifest.json");
  ASSERT_EQ(c.size(), 98u);
  std::map<Group, int> counts;
  for (const auto& r : c.recordings) ++counts[r.subject.group];
  EXPECT_EQ(counts[Group::MCI_LB], 14);
  EXPECT_EQ(counts[Group::MCI_AD], 38);
  EXPECT_EQ(counts[Group::CN], 46);
}

TEST(Cohort, EmptyManifestWarns) {
  fixture::TempDir dir("cohort");
  write_manifest(Manifest{}, dir / "manifest.json");
  CaptureWarnings w;
  const auto c = load_cohort(dir / "manifest.json");
  EXPECT_EQ(c.size(), 0u);
  EXPECT_EQ(w.seen.size(), 1u);
}

TEST(Cohort, DuplicateIdRejected) {
  fixture::TempDir dir("cohort");
  write_raw(dir / "a.csv", 300);
  Manifest m;
  m.entries.push_back({fixture::meta("S001"), "a.csv"});
  m.entries.push_back({fixture::meta("S001"), "a.csv"});
  write_manifest(m, dir / "manifest.json");
  EXPECT_THROW(load_cohort(dir / "manifest.json"), ValidationError);
}

TEST(Cohort, MissingFileAndBadMetadata) {
  fixture::TempDir dir("cohort");
  Manifest m;
  m.entries.push_back({fixture::meta("S001"), "nope.csv"});
  write_manifest(m, dir / "manifest.json");
  EXPECT_THROW(load_cohort(dir / "manifest.json"), DataError);

  write_raw(dir / "a.csv", 300);
  auto bad = fixture::meta("S002");
  bad.age = -3;
  m.entries = {{bad, "a.csv"}};
  write_manifest(m, dir / "manifest.json");
  EXPECT_THROW(load_cohort(dir / "manifest.json"), ValidationError);
}

TEST(Manifest, RoundTripsMetadata) {
  fixture::TempDir dir("manifest");
  Manifest m;
  m.provenance = "test";
  auto s = fixture::meta("S010", Group::MCI_LB);
  s.sex = Sex::M;
  s.neuropsych[Neuropsych::MMSE] = 26;
  s.neuropsych[Neuropsych::TMT_B] = 131.5;
  m.entries.push_back({s, "rec/S010.csv"});
  write_manifest(m, dir / "m.json");
  const auto back = read_manifest(dir / "m.json");
  ASSERT_EQ(back.entries.size(), 1u);
  const auto& b = back.entries[0].meta;
  EXPECT_EQ(b.group, Group::MCI_LB);
  EXPECT_EQ(b.sex, Sex::M);
  EXPECT_EQ(b.neuropsych.at(Neuropsych::TMT_B), 131.5);
  EXPECT_EQ(back.entries[0].recording, std::filesystem::path("rec/S010.csv"));
}

TEST(Names, ParseAndPrintAgree) {
  for (Group g : {Group::MCI_LB, Group::MCI_AD, Group::CN}) EXPECT_EQ(parse_group(to_string(g)), g);
  for (Neuropsych t : kNeuropsychTests) EXPECT_EQ(parse_neuropsych(to_string(t)), t);
  EXPECT_THROW(parse_group("DLB"), ParseError);
}
