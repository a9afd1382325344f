#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "balance/features.hpp"
#include "balance/preprocess.hpp"
#include "balance/recording.hpp"
#include "balance/simgen.hpp"

namespace fixture {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("balance_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline balance::SubjectMeta meta(const std::string& id, balance::Group g = balance::Group::CN) {
  balance::SubjectMeta m;
  m.id = id;
  m.group = g;
  m.age = 75;
  m.education = 12;
  m.height = 158;
  m.weight = 56;
  return m;
}

// Both feet at the same local CoP, equal forces.
inline balance::RawRecording recording(const std::vector<double>& ml, const std::vector<double>& ap,
                                       double force = 300.0) {
  balance::RawRecording rec;
  rec.subject = meta("S001");
  rec.frames.resize(ml.size());
  for (std::size_t i = 0; i < ml.size(); ++i) {
    rec.frames[i] = {ml[i], ap[i], force, ml[i], ap[i], force};
  }
  return rec;
}

// CopSeries whose velocities come from the SG derivative of the given positions.
inline balance::CopSeries series(std::vector<double> ml, std::vector<double> ap, double fs = 50.0) {
  balance::CopSeries s;
  s.sample_rate = fs;
  s.v_ml = balance::savitzky_golay_derivative(ml, fs);
  s.v_ap = balance::savitzky_golay_derivative(ap, fs);
  s.ml = std::move(ml);
  s.ap = std::move(ap);
  for (std::size_t i = 0; i < s.ml.size(); ++i) s.speed.push_back(std::hypot(s.v_ml[i], s.v_ap[i]));
  return s;
}

inline balance::CopSeries circle(double radius, double hz, std::size_t n, double fs = 50.0) {
  std::vector<double> ml(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    ml[i] = radius * std::cos(2.0 * std::numbers::pi * hz * t);
    ap[i] = radius * std::sin(2.0 * std::numbers::pi * hz * t);
  }
  return series(std::move(ml), std::move(ap), fs);
}

// Segments of one simulated 30 s recording.
inline std::vector<balance::Segment> sim_segments(std::uint64_t seed, double sigma = 6.0, double lambda = 1.0) {
  balance::SwayParams p;
  p.seed = seed;
  p.sigma = sigma;
  p.lambda = lambda;
  auto rec = balance::generate_recording(p);
  rec.subject = meta("S" + std::to_string(seed));
  return balance::segment_series(balance::preprocess_recording(rec), rec.subject.id);
}

// Segment-level matrix: `segs` rows per subject, the first `informative` columns shifted by
// +/- effect/2 according to the subject's class, plus a per-subject random offset.
inline balance::FeatureMatrix synthetic_matrix(std::size_t n_pos, std::size_t n_neg, std::size_t segs, std::size_t d,
                                               std::size_t informative, double effect, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  balance::FeatureMatrix m;
  for (std::size_t j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
  const std::size_t n = n_pos + n_neg;
  m.values.resize(static_cast<Eigen::Index>(n * segs), static_cast<Eigen::Index>(d));
  Eigen::Index r = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const int label = s < n_pos ? 1 : 0;
    char id[32];
    std::snprintf(id, sizeof id, "S%03zu", s + 1);
    std::vector<double> offset(d);
    for (double& o : offset) o = 0.5 * N(rng);
    for (std::size_t k = 0; k < segs; ++k, ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const double shift = j < informative ? (label ? 0.5 : -0.5) * effect : 0.0;
        m.values(r, static_cast<Eigen::Index>(j)) = shift + offset[j] + N(rng);
      }
      m.subject_ids.emplace_back(id);
      m.segment_index.push_back(k);
      m.labels.push_back(label);
    }
  }
  return m;
}

}  // namespace fixture
