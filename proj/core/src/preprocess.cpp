#include "balance/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>

#include "balance/error.hpp"
#include "balance/text.hpp"

namespace balance {

CopSeries CopSeries::slice(std::size_t first, std::size_t count) const {
  auto cut = [&](const std::vector<double>& v) {
    return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(first),
                               v.begin() + static_cast<std::ptrdiff_t>(first + count));
  };
  CopSeries out;
  out.sample_rate = sample_rate;
  out.ml = cut(ml);
  out.ap = cut(ap);
  out.v_ml = cut(v_ml);
  out.v_ap = cut(v_ap);
  out.speed = cut(speed);
  return out;
}

std::vector<Biquad> butterworth_sections(int order, double cutoff, double fs) {
  if (order < 1) throw ParameterError("filter order must be >= 1");
  if (!(fs > 0.0)) throw ParameterError("sample rate must be positive");
  if (!(cutoff > 0.0 && cutoff < fs / 2.0)) {
    throw ParameterError("cutoff must lie in (0, fs/2); got " + detail::format_sig(cutoff, 6) +
                         " Hz at fs " + detail::format_sig(fs, 6) + " Hz");
  }
  using cd = std::complex<double>;
  const double two_fs = 2.0 * fs;
  const double warped = two_fs * std::tan(std::numbers::pi * cutoff / fs);
  auto bilinear = [&](cd s) { return (two_fs + s) / (two_fs - s); };

  std::vector<Biquad> sections;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);
    const cd pole = warped * std::polar(1.0, theta);
    const cd zp = bilinear(pole);
    const double a1 = -2.0 * zp.real();
    const double a2 = std::norm(zp);
    const double g = (1.0 + a1 + a2) / 4.0;
    sections.push_back({g, 2.0 * g, g, a1, a2});
  }
  if (order % 2 == 1) {
    const double zr = bilinear(cd(-warped, 0.0)).real();
    const double g = (1.0 - zr) / 2.0;
    sections.push_back({g, g, 0.0, -zr, 0.0});
  }
  return sections;
}

namespace {

// Transposed direct form II, starting from the steady state of a constant input `level`.
void run_sections(const std::vector<Biquad>& sections, std::vector<double>& x, double level) {
  for (const auto& s : sections) {
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    double z1 = (gain - s.b0) * level;
    double z2 = (s.b2 - s.a2 * gain) * level;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level *= gain;
  }
}

}  // namespace

std::vector<double> butterworth_lowpass(std::span<const double> x, double cutoff, double fs,
                                        int order) {
  const auto sections = butterworth_sections(order, cutoff, fs);
  const std::size_t pad = 3 * static_cast<std::size_t>(order + 1);
  const std::size_t n = x.size();
  if (n <= pad) {
    throw TooShortError("filter input needs more than " + std::to_string(pad) + " samples; got " +
                        std::to_string(n));
  }
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_sections(sections, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  run_sections(sections, ext, ext.front());
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

FusedCop fuse_bilateral_cop(const RawRecording& rec, const PreprocessConfig& cfg) {
  const std::size_t n = rec.frames.size();
  std::vector<double> l_ml(n), l_ap(n), l_f(n), r_ml(n), r_ap(n), r_f(n);
  std::vector<bool> zero_raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = rec.frames[i];
    l_ml[i] = f.l_ml;
    l_ap[i] = f.l_ap;
    l_f[i] = f.l_force;
    r_ml[i] = f.r_ml;
    r_ap[i] = f.r_ap;
    r_f[i] = f.r_force;
    zero_raw[i] = f.l_force + f.r_force == 0.0;
  }
  const double fs = rec.sample_rate;
  auto lp = [&](const std::vector<double>& v) {
    return butterworth_lowpass(v, cfg.noise_cutoff, fs, cfg.filter_order);
  };
  l_ml = lp(l_ml);
  l_ap = lp(l_ap);
  l_f = lp(l_f);
  r_ml = lp(r_ml);
  r_ap = lp(r_ap);
  r_f = lp(r_f);

  const double off = foot_offset(rec.insole_width, cfg.foot_gap);
  FusedCop out;
  out.ml.assign(n, 0.0);
  out.ap.assign(n, 0.0);
  std::vector<bool> valid(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    // Ringing can push a filtered force slightly negative next to a zero-force stretch.
    const double fl = std::max(l_f[i], 0.0);
    const double fr = std::max(r_f[i], 0.0);
    const double total = fl + fr;
    if (zero_raw[i] || !(total > 0.0)) continue;
    out.ml[i] = (fl * (l_ml[i] - off) + fr * (r_ml[i] + off)) / total;
    out.ap[i] = (fl * l_ap[i] + fr * r_ap[i]) / total;
    valid[i] = true;
  }

  std::size_t prev = n;  // index of last valid frame seen
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) {
      prev = i;
      continue;
    }
    out.interpolated_frames.push_back(i);
    std::size_t next = i + 1;
    while (next < n && !valid[next]) ++next;
    if (prev == n && next == n) {
      throw DataError("recording for '" + rec.subject.id + "' has zero total force in every frame");
    }
    if (prev == n) {
      out.ml[i] = out.ml[next];
      out.ap[i] = out.ap[next];
    } else if (next == n) {
      out.ml[i] = out.ml[prev];
      out.ap[i] = out.ap[prev];
    } else {
      const double t = static_cast<double>(i - prev) / static_cast<double>(next - prev);
      out.ml[i] = out.ml[prev] + t * (out.ml[next] - out.ml[prev]);
      out.ap[i] = out.ap[prev] + t * (out.ap[next] - out.ap[prev]);
    }
  }
  return out;
}

namespace {

// Row p holds the weights giving the derivative of the least-squares polynomial,
// fitted on offsets -h..h, evaluated at offset p - h.
Eigen::MatrixXd sg_derivative_weights(int order, int window) {
  const int h = window / 2;
  Eigen::MatrixXd V(window, order + 1);
  for (int i = 0; i < window; ++i) {
    const double t = i - h;
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      V(i, j) = p;
      p *= t;
    }
  }
  const Eigen::MatrixXd pinv = (V.transpose() * V).ldlt().solve(V.transpose());
  Eigen::MatrixXd D(window, order + 1);
  for (int p = 0; p < window; ++p) {
    const double t0 = p - h;
    D(p, 0) = 0.0;
    double pow = 1.0;
    for (int j = 1; j <= order; ++j) {
      D(p, j) = j * pow;
      pow *= t0;
    }
  }
  return D * pinv;
}

}  // namespace

std::vector<double> savitzky_golay_derivative(std::span<const double> x, double fs, int order,
                                              int window) {
  if (window < 3 || window % 2 == 0) throw ParameterError("SG window must be odd and >= 3");
  if (order < 1 || order >= window) throw ParameterError("SG order must be in [1, window)");
  if (!(fs > 0.0)) throw ParameterError("sample rate must be positive");
  const auto n = x.size();
  if (n < static_cast<std::size_t>(window)) {
    throw TooShortError("SG derivative needs at least " + std::to_string(window) + " samples");
  }
  const Eigen::MatrixXd W = sg_derivative_weights(order, window);
  const int h = window / 2;
  std::vector<double> out(n);
  auto apply = [&](int row, std::size_t start) {
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += W(row, k) * x[start + static_cast<std::size_t>(k)];
    return acc * fs;
  };
  const auto uh = static_cast<std::size_t>(h);
  for (std::size_t i = 0; i < uh; ++i) out[i] = apply(static_cast<int>(i), 0);
  for (std::size_t i = uh; i + uh < n; ++i) out[i] = apply(h, i - uh);
  const std::size_t last_start = n - static_cast<std::size_t>(window);
  for (std::size_t i = n - uh; i < n; ++i) {
    out[i] = apply(static_cast<int>(i - last_start), last_start);
  }
  return out;
}

CopSeries preprocess_recording(const RawRecording& rec, const PreprocessConfig& cfg) {
  if (std::abs(rec.sample_rate - cfg.expected_rate) > 1e-9) {
    throw ParameterError("recording for '" + rec.subject.id + "' is sampled at " +
                         detail::format_sig(rec.sample_rate, 6) + " Hz; expected " +
                         detail::format_sig(cfg.expected_rate, 6) + " Hz (no resampling)");
  }
  const FusedCop fused = fuse_bilateral_cop(rec, cfg);
  CopSeries s;
  s.sample_rate = rec.sample_rate;
  s.ml = butterworth_lowpass(fused.ml, cfg.smooth_cutoff, rec.sample_rate, cfg.filter_order);
  s.ap = butterworth_lowpass(fused.ap, cfg.smooth_cutoff, rec.sample_rate, cfg.filter_order);
  s.v_ml = savitzky_golay_derivative(s.ml, rec.sample_rate, cfg.sg_order, cfg.sg_window);
  s.v_ap = savitzky_golay_derivative(s.ap, rec.sample_rate, cfg.sg_order, cfg.sg_window);
  s.speed.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) s.speed[i] = std::hypot(s.v_ml[i], s.v_ap[i]);
  return s;
}

std::size_t segment_count(std::size_t length, std::size_t window, std::size_t stride) {
  if (length < window) return 0;
  return (length - window) / stride + 1;
}

std::vector<Segment> segment_series(const CopSeries& s, const std::string& subject_id,
                                    std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ParameterError("window and stride must be positive");
  if (s.size() < window) {
    throw TooShortError("series of " + std::to_string(s.size()) + " frames is shorter than the " +
                        std::to_string(window) + "-frame window");
  }
  const std::size_t count = segment_count(s.size(), window, stride);
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back({subject_id, k, s.slice(k * stride, window)});
  }
  return out;
}

void write_cop_series(const CopSeries& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "frame,ml_mm,ap_mm,v_ml,v_ap,speed\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << i << ',' << detail::format_sig(s.ml[i], 9) << ',' << detail::format_sig(s.ap[i], 9)
        << ',' << detail::format_sig(s.v_ml[i], 9) << ',' << detail::format_sig(s.v_ap[i], 9)
        << ',' << detail::format_sig(s.speed[i], 9) << '\n';
  }
}

}  // namespace balance
