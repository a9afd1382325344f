#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "balance/recording.hpp"

namespace balance {

/// Whole-body CoP trajectory with velocity channels; all channels share one length.
struct CopSeries {
  double sample_rate = 50.0;
  std::vector<double> ml;    // mm
  std::vector<double> ap;    // mm
  std::vector<double> v_ml;  // mm/s
  std::vector<double> v_ap;  // mm/s
  std::vector<double> speed; // mm/s

  std::size_t size() const { return ml.size(); }
  /// Frames [first, first + count) of every channel.
  CopSeries slice(std::size_t first, std::size_t count) const;
};

struct Segment {
  std::string subject_id;
  std::size_t index = 0;
  CopSeries series;
};

struct PreprocessConfig {
  double expected_rate = 50.0;   // other rates are rejected; no resampling
  double noise_cutoff = 10.0;    // Hz, applied to the six raw channels
  double smooth_cutoff = 5.0;    // Hz, applied to the fused CoP
  int filter_order = 4;
  int sg_order = 3;
  int sg_window = 5;
  double foot_gap = 10.0;        // mm between the medial insole edges
  std::size_t window = 150;
  std::size_t stride = 50;
};

/// Second-order section, a0 normalised to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Digital Butterworth low-pass (bilinear transform with pre-warping) as cascaded sections.
/// Odd orders end with a first-order section stored with b2 = a2 = 0.
std::vector<Biquad> butterworth_sections(int order, double cutoff, double fs);

/// Zero-phase (forward-backward) Butterworth low-pass. The input is padded at each end
/// by odd reflection over 3*(order+1) samples and sections start from their step-response
/// steady state, so a constant input is returned unchanged.
std::vector<double> butterworth_lowpass(std::span<const double> x, double cutoff, double fs,
                                        int order = 4);

/// Lateral offset of each insole centre from the midline.
inline double foot_offset(double insole_width, double foot_gap) {
  return insole_width / 2.0 + foot_gap / 2.0;
}

struct FusedCop {
  std::vector<double> ml;
  std::vector<double> ap;
  std::vector<std::size_t> interpolated_frames;
};

/// Low-pass filters the six raw channels, then forms the force-weighted bilateral CoP.
FusedCop fuse_bilateral_cop(const RawRecording& rec, const PreprocessConfig& cfg = {});

/// First-derivative Savitzky-Golay filter, in units of x per second.
std::vector<double> savitzky_golay_derivative(std::span<const double> x, double fs,
                                              int order = 3, int window = 5);

/// Full chain: 10 Hz filter, fusion, 5 Hz smoothing, SG velocity, speed magnitude.
CopSeries preprocess_recording(const RawRecording& rec, const PreprocessConfig& cfg = {});

/// Number of full windows a series of `length` frames yields.
std::size_t segment_count(std::size_t length, std::size_t window, std::size_t stride);

std::vector<Segment> segment_series(const CopSeries& s, const std::string& subject_id,
                                    std::size_t window = 150, std::size_t stride = 50);

/// Debug dump `frame,ml_mm,ap_mm,v_ml,v_ap,speed`.
void write_cop_series(const CopSeries& s, const std::filesystem::path& path);

}  // namespace balance
