#include <random>

#include <benchmark/benchmark.h>

#include "balance/explain.hpp"
#include "balance/features.hpp"
#include "balance/pipeline.hpp"
#include "balance/preprocess.hpp"
#include "balance/simgen.hpp"

using namespace balance;

namespace {

RawRecording sim_recording(std::uint64_t seed) {
  SwayParams p;
  p.seed = seed;
  return generate_recording(p);
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

std::vector<int> labels_from(const Eigen::MatrixXd& X) {
  std::vector<int> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 0) + 0.5 * X(i, 1) > 0.0 ? 1 : 0);
  return y;
}

}  // namespace

static void BM_PreprocessRecording(benchmark::State& state) {
  const auto rec = sim_recording(1);
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_recording(rec));
}
BENCHMARK(BM_PreprocessRecording)->Unit(benchmark::kMicrosecond);

static void BM_SegmentFeatures(benchmark::State& state) {
  const auto segs = segment_series(preprocess_recording(sim_recording(2)), "S001");
  for (auto _ : state) {
    for (const auto& s : segs) benchmark::DoNotOptimize(compute_features(s));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(segs.size()));
}
BENCHMARK(BM_SegmentFeatures)->Unit(benchmark::kMicrosecond);

static void BM_SampleEntropy(benchmark::State& state) {
  const auto x = gaussian(1, 150, 3);
  const std::vector<double> v(x.data(), x.data() + 150);
  for (auto _ : state) benchmark::DoNotOptimize(sample_entropy(v));
}
BENCHMARK(BM_SampleEntropy);

static void BM_SvmDual(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto X = gaussian(n, 6, 4);
  const auto y = labels_from(X);
  const Eigen::MatrixXd K = rbf_kernel(X, X, 0.1);
  const std::vector<double> box(static_cast<std::size_t>(n), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fit_svm_dual(K, y, box));
}
BENCHMARK(BM_SvmDual)->Arg(200)->Arg(800)->Arg(1600)->Unit(benchmark::kMillisecond);

static void BM_LogisticL1(benchmark::State& state) {
  const auto X = gaussian(1500, 18, 5);
  const auto y = labels_from(X);
  const std::vector<double> w(1500, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic_l1(X, y, w, 1.0));
}
BENCHMARK(BM_LogisticL1)->Unit(benchmark::kMillisecond);

static void BM_RbfCoalitionTable(benchmark::State& state) {
  const auto M = static_cast<Eigen::Index>(state.range(0));
  SvmParams svm;
  svm.support_vectors = gaussian(300, M, 6);
  svm.coef = gaussian(300, 1, 7).col(0);
  svm.gamma = 0.2;
  const RbfCoalitions table(svm, gaussian(100, M, 8));
  const auto x = gaussian(1, M, 9);
  const std::vector<double> row(x.data(), x.data() + M);
  for (auto _ : state) {
    const auto v = table.values(row);
    benchmark::DoNotOptimize(kernel_shap(static_cast<std::size_t>(M), [&v](std::uint64_t m) { return v[m]; }));
  }
}
BENCHMARK(BM_RbfCoalitionTable)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
