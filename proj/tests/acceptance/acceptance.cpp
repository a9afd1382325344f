// Acceptance run: one PASS/FAIL line per primary criterion. Tolerances are fixed here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "balance/evaluation.hpp"
#include "balance/error.hpp"
#include "balance/explain.hpp"
#include "balance/features.hpp"
#include "balance/log.hpp"
#include "balance/preprocess.hpp"
#include "balance/recording.hpp"
#include "balance/simgen.hpp"
#include "balance/stats.hpp"
#include "fixtures.hpp"
#include "leakage.hpp"
#include "oracles.hpp"
#include "signals.hpp"

using namespace balance;

namespace {

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& text) { notes_.push_back(text); }

  bool report() const {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const bool ok = failed_ == 0;
    std::printf("[%s] %s (%zu checks, %.1f s)\n", ok ? "PASS" : "FAIL", name_.c_str(), checks_, sec);
    for (const auto& n : notes_) std::printf("       %s\n", n.c_str());
    for (const auto& f : failures_) std::printf("       failed: %s\n", f.c_str());
    if (failed_ > failures_.size()) std::printf("       ... %zu failures in total\n", failed_);
    std::fflush(stdout);
    return ok;
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  std::size_t checks_ = 0, failed_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int worker_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::vector<FeatureRow> cohort_rows(const Cohort& cohort) {
  std::vector<FeatureRow> rows;
  for (const auto& rec : cohort.recordings) {
    for (const auto& seg : segment_series(preprocess_recording(rec), rec.subject.id)) {
      auto row = compute_features(seg);
      row.group = rec.subject.group;
      row.covariates = covariates_from(rec.subject);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

FeatureMatrix simulated_matrix(const std::string& preset, std::size_t per_group, std::uint64_t seed) {
  fixture::TempDir dir("accept_" + preset);
  auto spec = sway_preset(preset, per_group, seed);
  spec.threads = worker_threads();
  const auto cohort = generate_cohort(spec, dir.path());
  const auto rows = cohort_rows(cohort);
  return assemble_matrix(rows, FeatureSet::INSOLE_ONLY, task_labels(Group::CN));
}

// ---------------------------------------------------------------------------

bool dsp_conformance() {
  Criterion c("DSP conformance: Butterworth(4, 10 Hz) gains, SG(3,5) exact on cubics, 1500-frame runtime");
  const auto at10 = butterworth_lowpass(fixture::sine(10.0, 1000, 50.0, 0.3), 10.0, 50.0);
  const auto at20 = butterworth_lowpass(fixture::sine(20.0, 1000, 50.0, 0.3), 10.0, 50.0);
  const double a10 = fixture::amplitude(at10, 10.0, 50.0, 200), a20 = fixture::amplitude(at20, 20.0, 50.0, 200);
  c.check(std::abs(a10 - 0.5) <= 0.02, "10 Hz amplitude " + fmt(a10));
  c.check(a20 < 0.01, "20 Hz amplitude " + fmt(a20));
  c.note("amplitude at 10 Hz " + fmt(a10, 6) + ", at 20 Hz " + fmt(a20, 3));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = U(rng), b = U(rng), cc = U(rng), d = U(rng);
    std::vector<double> x(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = static_cast<double>(i) / 50.0;
      x[i] = a * t * t * t + b * t * t + cc * t + d;
    }
    const auto dx = savitzky_golay_derivative(x, 50.0, 3, 5);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = static_cast<double>(i) / 50.0;
      worst = std::max(worst, std::abs(dx[i] - (3 * a * t * t + 2 * b * t + cc)));
    }
  }
  c.check(worst <= 1e-9, "SG cubic error " + fmt(worst));
  c.note("max SG derivative error on cubics " + fmt(worst, 3));

  SwayParams p;
  p.seed = 1;
  const auto rec = generate_recording(p);
  double slowest = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = preprocess_recording(rec);
    slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    c.check(s.size() == 1500, "series length");
  }
  c.check(slowest < 1.0, "preprocess runtime " + fmt(slowest) + " s");
  c.note("slowest 1500-frame preprocess " + fmt(slowest * 1000.0, 3) + " ms");
  return c.report();
}

bool feature_oracles() {
  Criterion c("Feature oracle equivalence: sample entropy counts, hf ratio vs dense FFT, type-7 percentiles");
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(150);
    for (double& v : x) v = U(rng);
    const double r = 0.2 * fixture::population_sd(x);
    const auto got = sample_entropy_counts(x, 2, r);
    const auto want = oracle::sampen_counts(x, 2, r);
    const bool same = got.a == want.a && got.b_head == want.b_head && got.b_tail == want.b_tail;
    exact += same;
    c.check(same, "sample entropy counts, signal " + std::to_string(trial));
  }
  c.note("sample entropy counts identical on " + std::to_string(exact) + "/100 signals");

  const std::vector<std::size_t> offsets{0, 28, 58, 86};
  std::mt19937_64 trng(8);
  std::uniform_real_distribution<double> in_band(2.6, 3.4), above(6.6, 20.0), amp(0.2, 2.0), phase(0.0, 6.28);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(150, 0.0);
    const int n_in = trial % 3 + 1, n_out = (trial / 3) % 3;
    for (int k = 0; k < n_in + n_out; ++k) {
      const double f = k < n_in ? in_band(trng) : above(trng);
      const double a = amp(trng), ph = phase(trng);
      for (std::size_t i = 0; i < 150; ++i) x[i] += a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / 50.0 + ph);
    }
    const double d = std::abs(hf_power_ratio(x, 50.0) - oracle::dense_band_ratio(x, 50.0, 1.0, 5.0, offsets));
    worst = std::max(worst, d);
    c.check(d <= 0.02, "hf ratio signal " + std::to_string(trial) + " differs by " + fmt(d));
  }
  c.note("max hf ratio deviation " + fmt(worst, 3) + " over 50 signals");

  std::vector<double> iota(100);
  std::iota(iota.begin(), iota.end(), 1.0);
  c.check(std::abs(percentile(iota, 97.5) - 97.525) < 1e-12, "P97.5 of 1..100");
  c.check(std::abs(percentile(iota, 2.5) - 3.475) < 1e-12, "P2.5 of 1..100");
  c.check(std::abs(percentile_range(iota) - 94.05) < 1e-12, "range of 1..100");
  c.check(percentile(iota, 50.0) == 50.5 && percentile(iota, 0.0) == 1.0 && percentile(iota, 100.0) == 100.0, "P0/P50/P100");
  c.check(std::abs(percentile(std::vector<double>{1, 2, 3, 4}, 25.0) - 1.75) < 1e-12, "P25 of 1..4");
  return c.report();
}

bool pipeline_arithmetic() {
  Criterion c("Pipeline arithmetic: 28 segments per 30 s, 2744 rows for 98 subjects, feature invariants");
  SwayParams p;
  p.seed = 12;
  auto rec = generate_recording(p);
  rec.subject = fixture::meta("S001");
  const auto segs = segment_series(preprocess_recording(rec), "S001");
  c.check(segs.size() == 28, "segments " + std::to_string(segs.size()));

  fixture::TempDir dir("accept_cohort");
  auto spec = sway_preset("null3", 1, 21);
  spec.profiles[0].n_subjects = 14;
  spec.profiles[1].n_subjects = 38;
  spec.profiles[2].n_subjects = 46;
  spec.threads = worker_threads();
  generate_cohort(spec, dir.path());
  const auto cohort = load_cohort(dir / "manifest.json");
  const auto rows = cohort_rows(cohort);
  c.check(cohort.size() == 98, "cohort size");
  c.check(rows.size() == 2744, "feature rows " + std::to_string(rows.size()));
  c.note(std::to_string(cohort.size()) + " subjects, " + std::to_string(rows.size()) + " feature rows");

  std::size_t checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; checked < 200; ++seed) {
    for (const auto& seg : fixture::sim_segments(seed)) {
      if (checked == 200) break;
      ++checked;
      const auto base = compute_features(seg).values;
      Segment moved = seg, scaled = seg, reversed = seg;
      moved.series = fixture::transformed(seg.series, 1.0, 37.0, false);
      scaled.series = fixture::transformed(seg.series, 2.5, 0.0, false);
      reversed.series = fixture::transformed(seg.series, 1.0, 0.0, true);
      const auto a = compute_features(moved).values;
      const auto b = compute_features(scaled).values;
      const auto r = compute_features(reversed).values;
      for (std::size_t j = 0; j < kNumCopFeatures; ++j) {
        const double scale = std::max(1.0, std::abs(base[j]));
        const bool scale_free = j == 2 || (j >= 5 && j <= 8);
        const double k = scale_free ? 1.0 : 2.5;
        const double e = std::max({std::abs(a[j] - base[j]), std::abs(r[j] - base[j]), std::abs(b[j] - k * base[j]) / k}) / scale;
        worst = std::max(worst, e);
        c.check(e <= 1e-9, std::string(kCopFeatureNames[j]) + " on segment " + std::to_string(checked));
      }
    }
  }
  c.note("max relative invariant error " + fmt(worst, 3) + " over 200 segments");
  return c.report();
}

bool solver_correctness() {
  Criterion c("Solver correctness: SMO vs brute-force QP, L1 logistic vs split oracle, sparsity path, KNN");
  std::mt19937_64 rng(21);
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_obj = 0.0, worst_kkt = 0.0;
  int fixtures = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + trial % 7;
    Eigen::MatrixXd X(n, 2);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      y.push_back(i % 2 == 0 ? 1 : (U(rng) < 0.5 ? 1 : 0));
      X(i, 0) = N(rng) + (y.back() ? 0.7 : -0.7);
      X(i, 1) = N(rng);
    }
    const double gamma = std::pow(10.0, -2.0 + 2.5 * U(rng));
    const double C = std::pow(10.0, -2.0 + 3.0 * U(rng));
    const bool balanced = U(rng) < 0.5;
    if (std::count(y.begin(), y.end(), 1) == n) continue;
    auto box = class_weights(y, balanced ? ClassWeight::BALANCED : ClassWeight::UNIFORM);
    for (double& b : box) b *= C;
    const Eigen::MatrixXd K = rbf_kernel(X, X, gamma);
    const auto fit = fit_svm_dual(K, y, box);
    const auto ref = oracle::brute_force_svm_dual(K, y, box);
    ++fixtures;
    const double d = std::abs(fit.dual_objective - ref.objective);
    const double kkt = oracle::svm_kkt_violation(K, y, box, fit.alpha);
    worst_obj = std::max(worst_obj, d);
    worst_kkt = std::max(worst_kkt, kkt);
    c.check(d <= 1e-4, "SMO objective gap " + fmt(d) + " at n=" + std::to_string(n));
    c.check(kkt <= 1e-3, "KKT violation " + fmt(kkt));
  }
  c.note(std::to_string(fixtures) + " SMO fixtures: max objective gap " + fmt(worst_obj, 3) + ", max KKT violation " + fmt(worst_kkt, 3));

  const std::vector<std::tuple<std::size_t, std::size_t, std::uint64_t, double, bool>> logistic = {
      {30, 3, 1, 1.0, false}, {40, 4, 2, 0.3, true}, {25, 2, 3, 10.0, true}};
  double worst_lr = 0.0;
  for (const auto& [n, d, seed, C, balanced] : logistic) {
    const auto ds = fixture::linear_data(n, d, 2, seed, 1.0);
    const auto w = class_weights(ds.y, balanced ? ClassWeight::BALANCED : ClassWeight::UNIFORM);
    const double gap = std::abs(fit_logistic_l1(ds.X, ds.y, w, C).objective - oracle::logistic_split_oracle(ds.X, ds.y, w, C));
    worst_lr = std::max(worst_lr, gap);
    c.check(gap <= 1e-5, "logistic objective gap " + fmt(gap));
  }
  c.note("max L1 logistic objective gap " + fmt(worst_lr, 3));

  const auto path = fixture::linear_data(60, 8, 3, 11, 1.0);
  const std::vector<double> unit(60, 1.0);
  int previous = 9;
  std::string counts;
  for (int k = 0; k < 10; ++k) {
    const auto fit = fit_logistic_l1(path.X, path.y, unit, std::pow(10.0, 2.0 - 0.4 * k));
    const int nnz = static_cast<int>((fit.weights.array() != 0.0).count());
    c.check(nnz <= previous, "sparsity increased at grid point " + std::to_string(k));
    previous = nnz;
    counts += (k ? "," : "") + std::to_string(nnz);
  }
  c.note("non-zero weights along the C grid: " + counts);

  std::mt19937_64 krng(12);
  int agreed = 0, total = 0;
  for (int k : {1, 2, 3, 4, 7, 20}) {
    const auto ds = fixture::linear_data(50, 4, 2, 30 + static_cast<std::uint64_t>(k));
    ModelSpec spec;
    spec.kind = ModelKind::KNN;
    spec.n_neighbors = k;
    spec.n_selected = 4;
    const auto model = fit(spec, ds.X, ds.y);
    const auto& params = std::get<KnnParams>(model.params);
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd raw(4);
      for (int j = 0; j < 4; ++j) raw(j) = N(krng);
      const Eigen::VectorXd x = model.prepare(std::span<const double>(raw.data(), 4));
      const auto got = model.predict_prepared(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      const auto want = oracle::knn_all_pairs(params.rows, params.labels, k, x);
      const bool same = got.score == want.score && got.label == want.label;
      agreed += same;
      ++total;
      c.check(same, "KNN k=" + std::to_string(k));
    }
  }
  c.note("KNN agrees with the all-pairs oracle on " + std::to_string(agreed) + "/" + std::to_string(total) + " queries");
  return c.report();
}

bool cv_integrity() {
  Criterion c("CV integrity: fold plan properties on 1000 cohorts, zero leakage, byte-identical reports");
  std::mt19937_64 rng(2024);
  int plans = 0;
  while (plans < 1000) {
    const std::size_t pos = 5 + rng() % 40, neg = 5 + rng() % 60;
    const int k_outer = 2 + static_cast<int>(rng() % 9), k_inner = 2 + static_cast<int>(rng() % 3);
    SubjectLabels subjects;
    for (std::size_t i = 0; i < pos + neg; ++i) subjects.emplace_back("S" + std::to_string(i), i < pos ? 1 : 0);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    FoldPlan plan;
    try {
      plan = make_fold_plan(subjects, k_outer, k_inner, rng());
    } catch (const ParameterError&) {
      continue;
    }
    ++plans;
    const std::map<std::string, int> label(subjects.begin(), subjects.end());
    auto check_partition = [&](const std::vector<std::vector<std::string>>& folds, const std::vector<std::string>& universe) {
      std::set<std::string> seen;
      std::map<int, double> class_total;
      for (const auto& id : universe) class_total[label.at(id)] += 1.0;
      for (const auto& fold : folds) {
        std::map<int, double> count;
        for (const auto& id : fold) {
          c.check(seen.insert(id).second, "subject in two folds");
          ++count[label.at(id)];
        }
        for (int cls : {0, 1}) {
          const double ideal = class_total[cls] / static_cast<double>(folds.size());
          c.check(std::abs(count[cls] - ideal) < 1.0, "stratification off by " + fmt(count[cls] - ideal));
        }
      }
      c.check(seen == std::set<std::string>(universe.begin(), universe.end()), "folds do not cover their subjects");
    };
    std::vector<std::string> all;
    for (const auto& s : subjects) all.push_back(s.first);
    check_partition(plan.outer, all);
    for (std::size_t f = 0; f < plan.outer.size(); ++f) check_partition(plan.inner[f], plan.outer_training(f));
  }
  c.note(std::to_string(plans) + " random fold plans checked");

  const auto m = fixture::synthetic_matrix(20, 20, 4, 6, 2, 1.5, 7);
  const auto plan = make_fold_plan(m.subjects(), 10, 5, 3);
  fixture::LeakageProbe probe(m, plan);
  CvOptions opts;
  opts.budget = 5;
  opts.observer = probe.observer();
  const auto first = run_nested_cv(m, ModelKind::SVM_RBF, plan, opts).to_json().dump();
  c.check(probe.fits() >= 10 * (5 + 1), "fits recorded " + std::to_string(probe.fits()));
  c.check(probe.unknown_splits() == 0, "fit on a subject set that is not a planned training side");
  c.check(probe.test_row_accesses() == 0, "test rows reached a fit: " + std::to_string(probe.test_row_accesses()));
  c.note(std::to_string(probe.fits()) + " fits observed, " + std::to_string(probe.test_row_accesses()) + " test-row accesses");

  CvOptions again;
  again.budget = 5;
  again.threads = worker_threads() > 1 ? worker_threads() : 2;
  const auto second = run_nested_cv(m, ModelKind::SVM_RBF, plan, again).to_json().dump();
  c.check(first == second, "CvReport differs between runs");
  c.note("report hash " + std::to_string(detail::fnv1a(first)) + " reproduced");
  return c.report();
}

bool shap_correctness() {
  Criterion c("SHAP: exact-mode local accuracy, linear closed form, product fixture");
  const auto m = fixture::synthetic_matrix(12, 12, 5, 6, 3, 1.5, 31);
  double worst = 0.0;
  std::size_t explained = 0;
  for (auto kind : {ModelKind::SVM_RBF, ModelKind::LOGISTIC_L1, ModelKind::KNN}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.C = kind == ModelKind::SVM_RBF ? 0.5 : 1.0;
    spec.gamma = 0.2;
    spec.n_neighbors = 5;
    spec.n_selected = 5;
    const auto model = fit(spec, m.values, m.labels);
    const auto results = explain_rows(model, m.values, m.values);
    const Eigen::MatrixXd prepared = model.prepare(m.values);
    for (Eigen::Index i = 0; i < prepared.rows(); ++i) {
      const auto& r = results[static_cast<std::size_t>(i)];
      const std::vector<double> x(prepared.row(i).begin(), prepared.row(i).end());
      const double f = model.predict_prepared(x).score;
      double s = r.base;
      for (double p : r.phi) s += p;
      const double e = std::abs(s - f);
      worst = std::max(worst, e);
      c.check(r.exact, "row explained in sampling mode");
      c.check(e <= 1e-6, std::string(to_string(kind)) + " local accuracy " + fmt(e));
      ++explained;
    }
  }
  c.note(std::to_string(explained) + " rows explained, max |phi0 + sum(phi) - f(x)| " + fmt(worst, 3));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  Eigen::MatrixXd bg(30, 5);
  for (Eigen::Index i = 0; i < bg.rows(); ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) bg(i, j) = N(rng);
  }
  const std::vector<double> w{1.5, -2.0, 0.0, 0.25, 3.0};
  double worst_linear = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(5);
    for (double& v : x) v = N(rng);
    const auto r = kernel_shap([&](std::span<const double> z) { return 0.7 + std::inner_product(w.begin(), w.end(), z.begin(), 0.0); }, bg, x);
    for (int j = 0; j < 5; ++j) {
      const double e = std::abs(r.phi[static_cast<std::size_t>(j)] - w[static_cast<std::size_t>(j)] * (x[static_cast<std::size_t>(j)] - bg.col(j).mean()));
      worst_linear = std::max(worst_linear, e);
      c.check(e <= 1e-6, "linear closed form " + fmt(e));
    }
  }
  c.note("max linear closed-form error " + fmt(worst_linear, 3));

  const auto prod = kernel_shap([](std::span<const double> z) { return z[0] * z[1]; }, Eigen::MatrixXd::Zero(1, 2), std::vector<double>{1.0, 1.0});
  c.check(std::abs(prod.phi[0] - 0.5) <= 1e-9 && std::abs(prod.phi[1] - 0.5) <= 1e-9, "product fixture");
  c.note("product fixture phi = (" + fmt(prod.phi[0], 12) + ", " + fmt(prod.phi[1], 12) + ")");
  return c.report();
}

bool stats_calibration() {
  Criterion c("Statistics calibration: ANCOVA null rate, studentized range MC vs quadrature, Spearman, chi-squared");
  StudentizedRangeOptions few;
  few.draws = 20'000;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  const std::vector<std::size_t> sizes{14, 38, 46};
  const std::vector<std::string> names{"age", "sex", "weight", "height"};
  int rejected = 0;
  const int runs = 200;
  for (int run = 0; run < runs; ++run) {
    std::vector<double> y;
    std::vector<int> g;
    Eigen::MatrixXd cov(98, 4);
    Eigen::Index i = 0;
    for (std::size_t grp = 0; grp < sizes.size(); ++grp) {
      for (std::size_t k = 0; k < sizes[grp]; ++k, ++i) {
        cov(i, 0) = 75 + 6 * N(rng);
        cov(i, 1) = static_cast<double>(rng() % 2);
        cov(i, 2) = 56 + 9 * N(rng);
        cov(i, 3) = 158 + 8 * N(rng);
        g.push_back(static_cast<int>(grp));
        y.push_back(0.02 * cov(i, 0) - 0.1 * cov(i, 1) + 0.01 * cov(i, 2) + N(rng));
      }
    }
    rejected += ancova_group_test(y, g, cov, names, few).p < 0.05;
  }
  const double rate = static_cast<double>(rejected) / runs;
  c.check(rate >= 0.02 && rate <= 0.09, "null rejection rate " + fmt(rate));
  c.note("ANCOVA null rejection rate " + fmt(rate) + " over " + std::to_string(runs) + " runs");

  StudentizedRangeOptions mc;
  mc.draws = 100'000;
  int within = 0;
  double worst_z = 0.0;
  for (int k : {2, 3, 5, 8}) {
    for (double df : {5.0, 20.0, 57.0, 200.0, 1000.0}) {
      const double q = 1.5 + 0.35 * k;
      const auto est = studentized_range_sf(q, k, df, mc);
      const double ref = oracle::studentized_range_sf(q, k, df);
      const double z = std::abs(est.p - ref) / est.se;
      worst_z = std::max(worst_z, z);
      within += z <= 3.0;
      c.check(z <= 3.0, "MC p " + fmt(est.p) + " vs " + fmt(ref) + " at k=" + std::to_string(k) + " df=" + fmt(df));
    }
  }
  c.note(std::to_string(within) + "/20 studentized-range points within 3 SE (max " + fmt(worst_z, 3) + " SE)");
  const auto tukey = studentized_range_sf(3.506, 3, 57);
  c.note("P(Q >= 3.506; k=3, df=57) = " + fmt(tukey.p) + " +/- " + fmt(tukey.se, 2));

  const std::vector<double> x{1, 2, 3, 4, 5};
  c.check(std::abs(*spearman(x, std::vector<double>{2, 1, 4, 3, 5}) - 0.8) < 1e-12, "Spearman 0.8 fixture");
  c.check(std::abs(*spearman(x, std::vector<double>{1, 8, 27, 64, 125}) - 1.0) < 1e-12, "Spearman cubic fixture");
  c.check(std::abs(*spearman(x, std::vector<double>{5, 4, 3, 2, 1}) + 1.0) < 1e-12, "Spearman reversed fixture");
  c.check(!spearman(x, std::vector<double>{3, 3, 3, 3, 3}).has_value(), "Spearman constant input");

  const auto chi = chi_square({{8, 17, 28}, {6, 21, 18}});
  c.check(std::abs(chi.p - 0.326) <= 0.01, "sex table p " + fmt(chi.p));
  c.note("sex by group chi-squared " + fmt(chi.statistic) + " on " + fmt(chi.df1) + " df, p = " + fmt(chi.p));
  return c.report();
}

bool end_to_end() {
  Criterion c("End-to-end: separable cohort accuracy and AUC, null chance band, velocity features lead SHAP");
  const int threads = worker_threads();
  const auto t0 = std::chrono::steady_clock::now();
  {
    const auto m = simulated_matrix("separable", 30, 1);
    const auto plan = make_fold_plan(m.subjects(), 10, 5, 1);
    CvOptions opts;
    opts.budget = 100;
    opts.threads = threads;
    const auto report = run_nested_cv(m, ModelKind::SVM_RBF, plan, opts);
    c.check(report.accuracy >= 0.85, "separable accuracy " + fmt(report.accuracy));
    c.check(report.auc >= 0.90, "separable AUC " + fmt(report.auc));
    c.note("separable 30/30, SVM, budget 100: accuracy " + fmt(report.accuracy) + ", AUC " + fmt(report.auc));
  }
  const double e2e = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.check(e2e <= 600.0, "end-to-end run took " + fmt(e2e) + " s");
  c.note("simulate + extract + nested CV took " + fmt(e2e, 3) + " s on " + std::to_string(threads) + " thread(s)");

  // Seed sweeps use a reduced search budget.
  constexpr int kSweepBudget = 10;
  std::vector<double> null_acc;
  double null_auc = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = simulated_matrix("null", 30, 100 + seed);
    CvOptions opts;
    opts.budget = kSweepBudget;
    opts.threads = threads;
    const auto report = run_nested_cv(m, ModelKind::SVM_RBF, make_fold_plan(m.subjects(), 10, 5, seed), opts);
    null_acc.push_back(report.accuracy);
    null_auc += report.auc / 10.0;
    per_seed += (seed > 1 ? " " : "") + fmt(report.accuracy, 3);
  }
  const double null_mean = std::accumulate(null_acc.begin(), null_acc.end(), 0.0) / 10.0;
  c.check(null_mean >= 0.35 && null_mean <= 0.65, "null mean accuracy " + fmt(null_mean));
  c.note("null cohorts, budget " + std::to_string(kSweepBudget) + ": mean accuracy " + fmt(null_mean) + " (" + per_seed + "), mean AUC " + fmt(null_auc));

  int velocity_top3 = 0;
  std::string tops;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = simulated_matrix("separable", 30, 200 + seed);
    const auto plan = make_fold_plan(m.subjects(), 10, 5, seed);
    CvOptions opts;
    opts.budget = kSweepBudget;
    opts.threads = threads;
    const auto report = run_nested_cv(m, ModelKind::SVM_RBF, plan, opts);
    ShapOptions so;
    so.seed = seed;
    so.threads = threads;
    const auto summary = explain_cv(m, plan, report, so);
    const auto ranking = summary.ranking();
    bool velocity = ranking.size() >= 3;
    for (std::size_t r = 0; r < std::min<std::size_t>(3, ranking.size()); ++r) {
      velocity = velocity && is_velocity_feature(summary.feature_names[ranking[r]]);
    }
    velocity_top3 += velocity;
    tops += (seed > 1 ? "; " : "") + (ranking.empty() ? std::string("-") : summary.feature_names[ranking[0]]);
  }
  c.check(velocity_top3 >= 8, "velocity features top-3 in " + std::to_string(velocity_top3) + "/10 seeds");
  c.note("velocity features hold the top 3 SHAP ranks in " + std::to_string(velocity_top3) + "/10 seeds (top: " + tops + ")");
  return c.report();
}

}  // namespace

// Optional arguments restrict the run to criteria whose name starts with one of them.
int main(int argc, char** argv) {
  set_warning_sink([](std::string_view) {});
  const std::vector<std::pair<const char*, bool (*)()>> criteria = {
      {"DSP conformance", dsp_conformance},         {"Feature oracle equivalence", feature_oracles},
      {"Pipeline arithmetic", pipeline_arithmetic}, {"Solver correctness", solver_correctness},
      {"CV integrity", cv_integrity},               {"SHAP", shap_correctness},
      {"Statistics calibration", stats_calibration}, {"End-to-end", end_to_end}};
  int failed = 0, ran = 0;
  const std::vector<std::string> only(argv + 1, argv + argc);
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::none_of(only.begin(), only.end(), [&](const std::string& o) {
          return std::string_view(name).starts_with(o);
        }))
      continue;
    ++ran;
    try {
      failed += run() ? 0 : 1;
    } catch (const std::exception& e) {
      std::printf("[FAIL] %s: aborted with %s\n", name, e.what());
      std::fflush(stdout);
      ++failed;
    }
  }
  std::printf("%d of %d criteria failed\n", failed, ran);
  return failed == 0 ? 0 : 1;
}
