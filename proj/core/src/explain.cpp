#include "balance/explain.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/special_functions/binomial.hpp>

#include "balance/error.hpp"
#include "balance/log.hpp"
#include "balance/random.hpp"
#include "balance/text.hpp"

namespace balance {

namespace {

double shapley_kernel(std::size_t M, std::size_t s) {
  const double c = boost::math::binomial_coefficient<double>(static_cast<unsigned>(M), static_cast<unsigned>(s));
  return static_cast<double>(M - 1) / (c * static_cast<double>(s) * static_cast<double>(M - s));
}

// Weighted least squares with sum(phi) = full - base, solved after eliminating the last
// coefficient.
std::vector<double> solve_constrained(std::size_t M, std::span<const std::uint64_t> masks,
                                      std::span<const double> weights, std::span<const double> values,
                                      double base, double full) {
  const double delta = full - base;
  std::vector<double> phi(M, 0.0);
  if (M == 1) {
    phi[0] = delta;
    return phi;
  }
  const auto n = static_cast<Eigen::Index>(masks.size());
  const auto d = static_cast<Eigen::Index>(M - 1);
  const std::uint64_t last = std::uint64_t{1} << (M - 1);
  Eigen::MatrixXd A(n, d);
  Eigen::VectorXd t(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto mask = masks[static_cast<std::size_t>(r)];
    const double zl = (mask & last) ? 1.0 : 0.0;
    const double sw = std::sqrt(weights[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double zj = (mask >> j) & 1U ? 1.0 : 0.0;
      A(r, j) = sw * (zj - zl);
    }
    t[r] = sw * (values[static_cast<std::size_t>(r)] - base - zl * delta);
  }
  const Eigen::VectorXd sol = A.completeOrthogonalDecomposition().solve(t);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    phi[static_cast<std::size_t>(j)] = sol[j];
    sum += sol[j];
  }
  phi[M - 1] = delta - sum;
  return phi;
}

}  // namespace

ShapResult kernel_shap(std::size_t M, const CoalitionValue& value, const ShapOptions& opts) {
  if (M == 0) throw ParameterError("kernel SHAP needs at least one feature");
  if (M > 62) throw ParameterError("kernel SHAP supports at most 62 features");
  const std::uint64_t full_mask = (std::uint64_t{1} << M) - 1;
  ShapResult r;
  r.base = value(0);
  r.value = value(full_mask);

  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
  if (M <= opts.exact_max_features) {
    r.exact = true;
    for (std::uint64_t mask = 1; mask < full_mask; ++mask) {
      masks.push_back(mask);
      weights.push_back(shapley_kernel(M, static_cast<std::size_t>(std::popcount(mask))));
    }
  } else {
    r.exact = false;
    if (opts.n_samples < M + 2) {
      throw ParameterError("sampling mode needs at least " + std::to_string(M + 2) + " coalitions, got " +
                           std::to_string(opts.n_samples));
    }
    std::mt19937_64 rng(opts.seed);
    std::vector<double> size_weight;
    for (std::size_t s = 1; s < M; ++s) {
      size_weight.push_back(static_cast<double>(M - 1) / (static_cast<double>(s) * static_cast<double>(M - s)));
    }
    std::discrete_distribution<std::size_t> size_dist(size_weight.begin(), size_weight.end());
    std::vector<std::size_t> idx(M);
    while (masks.size() < opts.n_samples) {
      const std::size_t s = size_dist(rng) + 1;
      std::iota(idx.begin(), idx.end(), 0);
      std::uint64_t mask = 0;
      for (std::size_t k = 0; k < s; ++k) {
        const auto pick = std::uniform_int_distribution<std::size_t>(k, M - 1)(rng);
        std::swap(idx[k], idx[pick]);
        mask |= std::uint64_t{1} << idx[k];
      }
      masks.push_back(mask);
      if (masks.size() < opts.n_samples) masks.push_back(full_mask & ~mask);
    }
    weights.assign(masks.size(), 1.0);
  }
  std::vector<double> values(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) values[i] = value(masks[i]);
  r.phi = solve_constrained(M, masks, weights, values, r.base, r.value);
  return r;
}

CoalitionValue background_value(const ScoreFn& f, const Eigen::MatrixXd& background, std::span<const double> x) {
  if (background.rows() == 0) throw ParameterError("kernel SHAP needs at least one background row");
  if (static_cast<std::size_t>(background.cols()) != x.size()) {
    throw ParameterError("background and explained row differ in dimension");
  }
  std::vector<double> row(x.begin(), x.end());
  return [f, background, row](std::uint64_t mask) {
    std::vector<double> z(row.size());
    double sum = 0.0;
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      for (std::size_t j = 0; j < z.size(); ++j) {
        z[j] = (mask >> j) & 1U ? row[j] : background(b, static_cast<Eigen::Index>(j));
      }
      sum += f(z);
    }
    return sum / static_cast<double>(background.rows());
  };
}

ShapResult kernel_shap(const ScoreFn& f, const Eigen::MatrixXd& background, std::span<const double> x,
                       const ShapOptions& opts) {
  return kernel_shap(x.size(), background_value(f, background, x), opts);
}

RbfCoalitions::RbfCoalitions(const SvmParams& svm, const Eigen::MatrixXd& background)
    : sv_(svm.support_vectors), coef_(svm.coef), bias_(svm.bias), gamma_(svm.gamma) {
  if (background.rows() == 0) throw ParameterError("kernel SHAP needs at least one background row");
  if (background.cols() != sv_.cols()) throw ParameterError("background and model differ in dimension");
  const auto M = static_cast<std::size_t>(sv_.cols());
  if (M > 20) throw ParameterError("RBF coalition table supports at most 20 features");
  const std::size_t n_masks = std::size_t{1} << M;
  absent_ = Eigen::MatrixXd::Zero(sv_.rows(), static_cast<Eigen::Index>(n_masks));
  std::vector<double> g(M), prod(n_masks);
  for (Eigen::Index s = 0; s < sv_.rows(); ++s) {
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      for (std::size_t j = 0; j < M; ++j) {
        const double d = background(b, static_cast<Eigen::Index>(j)) - sv_(s, static_cast<Eigen::Index>(j));
        g[j] = std::exp(-gamma_ * d * d);
      }
      prod[0] = 1.0;
      for (std::size_t mask = 1; mask < n_masks; ++mask) {
        const auto low = static_cast<std::size_t>(std::countr_zero(mask));
        prod[mask] = prod[mask & (mask - 1)] * g[low];
      }
      for (std::size_t mask = 0; mask < n_masks; ++mask) absent_(s, static_cast<Eigen::Index>(mask)) += prod[mask];
    }
  }
  absent_ /= static_cast<double>(background.rows());
}

std::vector<double> RbfCoalitions::values(std::span<const double> x) const {
  const auto M = features();
  if (x.size() != M) throw ParameterError("explained row and model differ in dimension");
  const std::size_t n_masks = std::size_t{1} << M;
  const std::size_t full = n_masks - 1;
  std::vector<double> out(n_masks, bias_);
  std::vector<double> g(M), prod(n_masks);
  for (Eigen::Index s = 0; s < sv_.rows(); ++s) {
    for (std::size_t j = 0; j < M; ++j) {
      const double d = x[j] - sv_(s, static_cast<Eigen::Index>(j));
      g[j] = std::exp(-gamma_ * d * d);
    }
    prod[0] = 1.0;
    for (std::size_t mask = 1; mask < n_masks; ++mask) {
      const auto low = static_cast<std::size_t>(std::countr_zero(mask));
      prod[mask] = prod[mask & (mask - 1)] * g[low];
    }
    const double c = coef_[s];
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      out[mask] += c * prod[mask] * absent_(s, static_cast<Eigen::Index>(full & ~mask));
    }
  }
  return out;
}

Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& rows, std::size_t cap) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (n <= cap) return rows;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(cap), rows.cols());
  for (std::size_t i = 0; i < cap; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(i * n / cap));
  }
  return out;
}

std::vector<ShapResult> explain_rows(const TrainedModel& model, const Eigen::MatrixXd& background_raw,
                                     const Eigen::MatrixXd& rows_raw, const ShapOptions& opts) {
  const Eigen::MatrixXd background = model.prepare(subsample_rows(background_raw, opts.max_background));
  const Eigen::MatrixXd X = model.prepare(rows_raw);
  const auto M = static_cast<std::size_t>(X.cols());
  const auto n = static_cast<std::size_t>(X.rows());

  std::optional<RbfCoalitions> rbf;
  if (const auto* svm = std::get_if<SvmParams>(&model.params); svm && M <= opts.exact_max_features) {
    rbf.emplace(*svm, background);
  }
  const ScoreFn score = [&model](std::span<const double> z) { return model.predict_prepared(z).score; };

  std::vector<ShapResult> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    std::vector<double> x(M);
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        for (std::size_t j = 0; j < M; ++j) x[j] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        ShapOptions row_opts = opts;
        row_opts.seed = derive_seed(opts.seed, {i});
        if (rbf) {
          const auto table = rbf->values(x);
          out[i] = kernel_shap(M, [&table](std::uint64_t mask) { return table[mask]; }, row_opts);
        } else {
          out[i] = kernel_shap(score, background, x, row_opts);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp(opts.threads, 1, std::max(1, static_cast<int>(n))));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<std::size_t> ShapSummary::ranking() const {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    if (retained[j]) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean_abs_shap[a] > mean_abs_shap[b]; });
  return order;
}

ShapSummary summarize_shap(const CvReport& report, std::span<const FoldExplanation> folds, const ShapOptions& opts) {
  if (folds.size() != report.folds.size()) {
    throw ParameterError("expected " + std::to_string(report.folds.size()) + " fold models, got " +
                         std::to_string(folds.size()));
  }
  const std::size_t d = report.feature_names.size();
  ShapSummary s;
  s.feature_names = report.feature_names;
  s.occurrence = report.occurrence;
  s.mean_abs_shap.assign(d, 0.0);
  s.retained.assign(d, false);
  // Occurrence rates are count / folds; compare counts to dodge rounding at the boundary.
  const auto n_folds = static_cast<double>(report.folds.size());
  for (std::size_t j = 0; j < d; ++j) {
    s.retained[j] = std::round(s.occurrence[j] * n_folds) >= kMinOccurrence * n_folds - 1e-9;
  }

  double base_sum = 0.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    ShapOptions fold_opts = opts;
    fold_opts.seed = derive_seed(opts.seed, {f});
    const auto& fe = folds[f];
    const auto results = explain_rows(fe.model, fe.background, fe.rows, fold_opts);
    for (const auto& r : results) {
      for (std::size_t k = 0; k < r.phi.size(); ++k) s.mean_abs_shap[fe.model.selected[k]] += std::abs(r.phi[k]);
      base_sum += r.base;
    }
    s.n_rows += results.size();
  }
  if (s.n_rows > 0) {
    for (auto& v : s.mean_abs_shap) v /= static_cast<double>(s.n_rows);
    s.base_value = base_sum / static_cast<double>(s.n_rows);
  }
  if (std::none_of(s.retained.begin(), s.retained.end(), [](bool b) { return b; })) {
    warn("no feature was selected in at least 20% of the folds; SHAP summary is empty");
  }
  return s;
}

ShapSummary explain_cv(const FeatureMatrix& m, const FoldPlan& plan, const CvReport& report, const ShapOptions& opts) {
  auto take = [&](std::span<const std::string> ids) {
    const auto idx = rows_of(m, ids);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.values.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = m.values.row(static_cast<Eigen::Index>(idx[i]));
    }
    return out;
  };
  std::vector<FoldExplanation> folds;
  for (std::size_t f = 0; f < plan.outer.size(); ++f) {
    folds.push_back({refit_fold(m, plan, report, f), take(plan.outer_training(f)), take(plan.outer[f])});
  }
  return summarize_shap(report, folds, opts);
}

void write_shap_csv(const ShapSummary& s, const std::filesystem::path& path, std::span<const std::string> provenance) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "# base_value=" << detail::format_exact(s.base_value) << " rows=" << s.n_rows << '\n';
  out << "feature,occurrence_rate,mean_abs_shap\n";
  for (auto j : s.ranking()) {
    out << s.feature_names[j] << ',' << detail::format_exact(s.occurrence[j]) << ','
        << detail::format_exact(s.mean_abs_shap[j]) << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace balance
