#include "balance/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "balance/error.hpp"
#include "balance/text.hpp"

namespace balance {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Spread below this is treated as exactly zero; filter round-off leaves ~1e-14 wiggle
// on signals that are constant by construction.
double degenerate_tol(double level) { return 1e-10 * (1.0 + std::abs(level)); }

std::vector<double> centered(std::span<const double> x) {
  const double m = mean_of(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - m;
  return out;
}

double population_sd(std::span<const double> x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace

bool is_velocity_feature(std::string_view name) {
  for (std::size_t i = kFirstVelocityFeature; i < kNumCopFeatures; ++i) {
    if (kCopFeatureNames[i] == name) return true;
  }
  return false;
}

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ParameterError("percentile of an empty sequence");
  if (!(p >= 0.0 && p <= 100.0)) throw ParameterError("percentile must lie in [0, 100]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double percentile(std::span<const double> x, double p) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return percentile_sorted(s, p);
}

double percentile_range(std::span<const double> x, double lo, double hi) {
  if (x.empty()) throw ParameterError("percentile range of an empty sequence");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return std::max(0.0, percentile_sorted(s, hi) - percentile_sorted(s, lo));
}

SampleEntropyCounts sample_entropy_counts(std::span<const double> x, int m, double r) {
  if (m < 1) throw ParameterError("embedding dimension must be >= 1");
  const auto um = static_cast<std::size_t>(m);
  if (x.size() < um + 2) {
    throw TooShortError("sample entropy needs at least m + 2 samples");
  }
  const std::size_t n_templates = x.size() - um;  // templates 0..N-m-1 have an extension
  SampleEntropyCounts c;
  c.pairs = static_cast<std::uint64_t>(n_templates) * (n_templates - 1) / 2;
  for (std::size_t i = 0; i + um <= x.size() - 1; ++i) {
    for (std::size_t j = i + 1; j <= x.size() - um; ++j) {
      bool match = true;
      for (std::size_t k = 0; k < um && match; ++k) match = std::abs(x[i + k] - x[j + k]) <= r;
      if (!match) continue;
      if (i >= 1) ++c.b_tail;
      if (j < n_templates) {
        ++c.b_head;
        if (std::abs(x[i + um] - x[j + um]) <= r) ++c.a;
      }
    }
  }
  return c;
}

double sample_entropy(std::span<const double> x, const SampleEntropyConfig& cfg) {
  if (x.size() < static_cast<std::size_t>(cfg.m) + 2) {
    throw TooShortError("sample entropy needs at least m + 2 samples");
  }
  const double sd = population_sd(x);
  if (sd <= degenerate_tol(mean_of(x))) return 0.0;
  const auto c = sample_entropy_counts(x, cfg.m, cfg.r_factor * sd);
  const double b = 0.5 * static_cast<double>(c.b_head + c.b_tail);
  if (c.a == 0 || b == 0.0) return std::log(static_cast<double>(c.pairs));
  return std::log(b / static_cast<double>(c.a));
}

std::vector<double> welch_psd(std::span<const double> x, double fs, std::size_t segment) {
  const std::size_t n = x.size();
  if (segment < 4) throw ParameterError("Welch segment must be at least 4 samples");
  if (n < segment) {
    throw TooShortError("Welch estimate needs at least " + std::to_string(segment) + " samples");
  }
  const std::size_t span = n - segment;
  const std::size_t half = segment / 2;
  std::size_t count = span == 0 ? 1 : (span + half - 1) / half + 1;
  if (count % 2 == 1 && span % 2 == 1) ++count;  // odd middle offset cannot be centred

  std::vector<std::size_t> offsets(count);
  for (std::size_t i = 0; i < (count + 1) / 2; ++i) {
    offsets[i] = count == 1 ? 0 : i * span / (count - 1);
    offsets[count - 1 - i] = span - offsets[i];
  }

  std::vector<double> window(segment);
  double wss = 0.0;
  for (std::size_t k = 0; k < segment; ++k) {
    window[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                     static_cast<double>(segment - 1));
    wss += window[k] * window[k];
  }
  std::vector<std::complex<double>> twiddle(segment);
  for (std::size_t k = 0; k < segment; ++k) {
    twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) /
                                     static_cast<double>(segment));
  }

  std::vector<double> psd(half + 1, 0.0);
  std::vector<double> y(segment);
  for (std::size_t off : offsets) {
    const double mu = mean_of(x.subspan(off, segment));
    for (std::size_t k = 0; k < segment; ++k) y[k] = (x[off + k] - mu) * window[k];
    for (std::size_t f = 0; f <= half; ++f) {
      std::complex<double> acc = 0.0;
      for (std::size_t k = 0; k < segment; ++k) acc += y[k] * twiddle[(f * k) % segment];
      double p = std::norm(acc) / (fs * wss);
      if (f != 0 && !(segment % 2 == 0 && f == half)) p *= 2.0;
      psd[f] += p;
    }
  }
  for (double& p : psd) p /= static_cast<double>(count);
  return psd;
}

double hf_power_ratio(std::span<const double> x, double fs, const WelchConfig& cfg) {
  if (!(fs > 2.0 * cfg.band_hi)) throw ParameterError("sample rate too low for the band");
  if (!(cfg.band_lo < cfg.band_hi)) throw ParameterError("band edges out of order");
  const auto c = centered(x);
  const double spread = *std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end());
  if (spread <= degenerate_tol(mean_of(x))) return 0.0;
  const auto psd = welch_psd(c, fs, cfg.segment);
  double total = 0.0;
  double band = 0.0;
  for (std::size_t k = 1; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(cfg.segment);
    total += psd[k];
    if (f >= cfg.band_lo && f <= cfg.band_hi) band += psd[k];
  }
  if (!(total > 0.0)) return 0.0;
  return std::clamp(band / total, 0.0, 1.0);
}

FeatureRow compute_features(const Segment& seg, const FeatureConfig& cfg) {
  const auto& s = seg.series;
  if (s.size() < 2 || s.ap.size() != s.size() || s.v_ml.size() != s.size() ||
      s.v_ap.size() != s.size() || s.speed.size() != s.size()) {
    throw ValidationError("segment channels are empty or of unequal length");
  }
  FeatureRow row;
  row.subject_id = seg.subject_id;
  row.segment_index = seg.index;
  auto& v = row.values;

  const auto ml = centered(s.ml);
  const auto ap = centered(s.ap);
  v[0] = percentile_range(ml, cfg.range_lo, cfg.range_hi);
  v[1] = percentile_range(ap, cfg.range_lo, cfg.range_hi);
  if (v[1] <= degenerate_tol(mean_of(s.ap))) {
    v[2] = 0.0;
    row.range_ratio_undefined = true;
  } else {
    v[2] = v[0] / v[1];
  }
  auto rms = [](const std::vector<double>& c) {
    double ss = 0.0;
    for (double x : c) ss += x * x;
    return std::sqrt(ss / static_cast<double>(c.size()));
  };
  v[3] = rms(ml);
  v[4] = rms(ap);
  v[5] = sample_entropy(ml, cfg.sampen);
  v[6] = sample_entropy(ap, cfg.sampen);
  v[7] = hf_power_ratio(ml, s.sample_rate, cfg.welch);
  v[8] = hf_power_ratio(ap, s.sample_rate, cfg.welch);

  // Velocity block, reported in m/s.
  constexpr double kMmToM = 1e-3;
  const auto n = static_cast<double>(s.size());
  double sum_speed = 0.0, sum_ml = 0.0, sum_ap = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sum_speed += s.speed[i];
    sum_ml += std::abs(s.v_ml[i]);
    sum_ap += std::abs(s.v_ap[i]);
  }
  v[9] = sum_speed / n * kMmToM;
  v[10] = sum_ml / n * kMmToM;
  v[11] = sum_ap / n * kMmToM;
  std::vector<double> sorted(s.speed);
  std::sort(sorted.begin(), sorted.end());
  v[12] = percentile_sorted(sorted, 10.0) * kMmToM;
  v[13] = percentile_sorted(sorted, 25.0) * kMmToM;
  v[14] = percentile_sorted(sorted, 50.0) * kMmToM;
  v[15] = percentile_sorted(sorted, 75.0) * kMmToM;
  v[16] = percentile_sorted(sorted, 90.0) * kMmToM;
  const double med = percentile_sorted(sorted, 50.0);
  std::vector<double> dev(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) dev[i] = std::abs(sorted[i] - med);
  std::sort(dev.begin(), dev.end());
  v[17] = percentile_sorted(dev, 50.0) * kMmToM;
  return row;
}

Covariates covariates_from(const SubjectMeta& meta) {
  Covariates c;
  c.sex = meta.sex;
  c.age = meta.age;
  c.education = meta.education;
  if (meta.has_full_neuropsych()) {
    std::array<double, 6> np{};
    for (std::size_t i = 0; i < kNeuropsychTests.size(); ++i) {
      np[i] = meta.neuropsych.at(kNeuropsychTests[i]);
    }
    c.neuropsych = np;
  }
  return c;
}

std::string_view to_string(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::INSOLE_ONLY: return "insole";
    case FeatureSet::REFERENCE: return "reference";
    case FeatureSet::HYBRID: return "hybrid";
  }
  return "insole";
}

FeatureSet parse_feature_set(std::string_view text) {
  if (text == "insole" || text == "INSOLE_ONLY") return FeatureSet::INSOLE_ONLY;
  if (text == "reference" || text == "REFERENCE") return FeatureSet::REFERENCE;
  if (text == "hybrid" || text == "HYBRID") return FeatureSet::HYBRID;
  throw ParameterError("unknown feature set '" + std::string(text) + "'");
}

std::vector<std::pair<std::string, int>> FeatureMatrix::subjects() const {
  std::vector<std::pair<std::string, int>> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < subject_ids.size(); ++r) {
    if (seen.insert(subject_ids[r]).second) out.emplace_back(subject_ids[r], labels[r]);
  }
  return out;
}

LabelMap task_labels(Group negative) {
  if (negative == Group::MCI_LB) throw ParameterError("negative class must differ from MCI_LB");
  return {{Group::MCI_LB, 1}, {negative, 0}};
}

FeatureMatrix assemble_matrix(std::span<const FeatureRow> rows, FeatureSet feature_set,
                              const LabelMap& label_map) {
  FeatureMatrix m;
  m.feature_set = feature_set;
  const bool use_cop = feature_set != FeatureSet::REFERENCE;
  const bool use_cov = feature_set != FeatureSet::INSOLE_ONLY;
  if (use_cop) {
    for (auto name : kCopFeatureNames) m.feature_names.emplace_back(name);
  }
  if (use_cov) {
    for (auto name : kCovariateNames) m.feature_names.emplace_back(name);
  }

  std::vector<const FeatureRow*> kept;
  std::set<std::string> missing;
  for (const auto& row : rows) {
    if (!row.group) continue;
    if (label_map.find(*row.group) == label_map.end()) continue;
    if (use_cov && (!row.covariates || !row.covariates->neuropsych)) {
      missing.insert(row.subject_id);
      continue;
    }
    kept.push_back(&row);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError("feature set '" + std::string(to_string(feature_set)) +
                    "' needs demographic and neuropsychological covariates; missing for: " + list);
  }

  m.values.resize(static_cast<Eigen::Index>(kept.size()),
                  static_cast<Eigen::Index>(m.feature_names.size()));
  std::map<std::string, int> subject_label;
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto& row = *kept[r];
    const int label = label_map.at(*row.group);
    auto [it, inserted] = subject_label.emplace(row.subject_id, label);
    if (!inserted && it->second != label) {
      throw DataError("subject '" + row.subject_id + "' has rows with conflicting groups");
    }
    Eigen::Index c = 0;
    const auto ri = static_cast<Eigen::Index>(r);
    if (use_cop) {
      for (double v : row.values) m.values(ri, c++) = v;
    }
    if (use_cov) {
      const auto& cov = *row.covariates;
      m.values(ri, c++) = cov.sex == Sex::F ? 1.0 : 0.0;
      m.values(ri, c++) = cov.age;
      m.values(ri, c++) = cov.education;
      for (double v : *cov.neuropsych) m.values(ri, c++) = v;
    }
    m.subject_ids.push_back(row.subject_id);
    m.segment_index.push_back(row.segment_index);
    m.labels.push_back(label);
  }
  return m;
}

void write_feature_csv(std::span<const FeatureRow> rows, const std::filesystem::path& path,
                       std::span<const std::string> provenance) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature CSV '" + path.string() + "'");
  for (const auto& line : provenance) out << "# " << line << '\n';
  const bool with_cov =
      std::any_of(rows.begin(), rows.end(), [](const FeatureRow& r) { return r.covariates.has_value(); });
  out << "subject_id,segment_index,label";
  for (auto name : kCopFeatureNames) out << ',' << name;
  if (with_cov) {
    for (auto name : kCovariateNames) out << ',' << name;
  }
  out << '\n';
  for (const auto& row : rows) {
    out << row.subject_id << ',' << row.segment_index << ','
        << (row.group ? to_string(*row.group) : std::string_view{});
    for (double v : row.values) out << ',' << detail::format_exact(v);
    if (with_cov) {
      if (row.covariates) {
        const auto& c = *row.covariates;
        out << ',' << (c.sex == Sex::F ? "1" : "0") << ',' << detail::format_exact(c.age) << ','
            << detail::format_exact(c.education);
        for (std::size_t i = 0; i < 6; ++i) {
          out << ',';
          if (c.neuropsych) out << detail::format_exact((*c.neuropsych)[i]);
        }
      } else {
        out << ",,,,,,,,,";
      }
    }
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path,
                                         std::vector<std::string>* provenance) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature CSV '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool with_cov = false;
  std::vector<FeatureRow> rows;
  const std::size_t base_cols = 3 + kNumCopFeatures;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (view.empty()) continue;
    if (!have_header) {
      if (view.front() == '#') {
        if (provenance) provenance->emplace_back(detail::trim(view.substr(1)));
        continue;
      }
      auto cols = detail::split(view, ',');
      if (cols.size() != base_cols && cols.size() != base_cols + kCovariateNames.size()) {
        throw ParseError("unexpected feature CSV header", line_no);
      }
      if (cols[0] != "subject_id" || cols[1] != "segment_index" || cols[2] != "label") {
        throw ParseError("feature CSV must start with subject_id,segment_index,label", line_no);
      }
      for (std::size_t i = 0; i < kNumCopFeatures; ++i) {
        if (cols[3 + i] != kCopFeatureNames[i]) {
          throw ParseError("feature column " + std::to_string(3 + i) + " should be '" +
                               std::string(kCopFeatureNames[i]) + "'",
                           line_no);
        }
      }
      with_cov = cols.size() > base_cols;
      have_header = true;
      continue;
    }
    auto cells = detail::split(view, ',');
    if (cells.size() != (with_cov ? base_cols + kCovariateNames.size() : base_cols)) {
      throw ParseError("wrong number of cells", line_no);
    }
    FeatureRow row;
    row.subject_id = std::string(cells[0]);
    long long seg = 0;
    if (!detail::parse_int(cells[1], seg) || seg < 0) throw ParseError("bad segment_index", line_no);
    row.segment_index = static_cast<std::size_t>(seg);
    if (!cells[2].empty()) row.group = parse_group(cells[2]);
    for (std::size_t i = 0; i < kNumCopFeatures; ++i) {
      if (!detail::parse_double(cells[3 + i], row.values[i]) || !std::isfinite(row.values[i])) {
        throw ParseError("bad value for " + std::string(kCopFeatureNames[i]), line_no);
      }
    }
    if (with_cov && !cells[base_cols].empty()) {
      Covariates c;
      double sex = 0.0;
      auto cell = [&](std::size_t k) { return cells[base_cols + k]; };
      if (!detail::parse_double(cell(0), sex) || !detail::parse_double(cell(1), c.age) ||
          !detail::parse_double(cell(2), c.education)) {
        throw ParseError("bad demographic covariates", line_no);
      }
      c.sex = sex == 1.0 ? Sex::F : Sex::M;
      bool any_np = false;
      std::array<double, 6> np{};
      for (std::size_t k = 0; k < 6; ++k) {
        if (cell(3 + k).empty()) continue;
        any_np = true;
        if (!detail::parse_double(cell(3 + k), np[k])) throw ParseError("bad neuropsych value", line_no);
      }
      if (any_np) {
        for (std::size_t k = 0; k < 6; ++k) {
          if (cell(3 + k).empty()) throw ParseError("incomplete neuropsych block", line_no);
        }
        c.neuropsych = np;
      }
      row.covariates = c;
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError("feature CSV '" + path.string() + "' has no header");
  return rows;
}

}  // namespace balance
