#include "balance/stats.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <tuple>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "balance/error.hpp"
#include "balance/log.hpp"
#include "balance/random.hpp"
#include "balance/text.hpp"

namespace balance {

std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("spearman inputs differ in length");
  if (x.size() < 3) throw ParameterError("spearman needs at least 3 pairs");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean, b = ry[i] - mean;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Studentized range
// ---------------------------------------------------------------------------

namespace {

using RangeKey = std::tuple<int, double, std::size_t, std::uint64_t>;

std::shared_ptr<const std::vector<double>> range_draws(int k, double df, const StudentizedRangeOptions& opts) {
  static std::mutex mutex;
  static std::map<RangeKey, std::shared_ptr<const std::vector<double>>> cache;
  const RangeKey key{k, df, opts.draws, opts.seed};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  std::mt19937_64 rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(k), std::bit_cast<std::uint64_t>(df)}));
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(df);
  auto draws = std::make_shared<std::vector<double>>(opts.draws);
  for (auto& d : *draws) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < k; ++i) {
      const double z = normal(rng);
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    d = (hi - lo) / std::sqrt(chi2(rng) / df);
  }
  std::sort(draws->begin(), draws->end());
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(draws)).first->second;
}

}  // namespace

MonteCarloP studentized_range_sf(double q, int k, double df, const StudentizedRangeOptions& opts) {
  if (k < 2) throw ParameterError("studentized range needs at least 2 groups");
  if (!(df > 0.0)) throw ParameterError("studentized range needs positive degrees of freedom");
  if (opts.draws == 0) throw ParameterError("studentized range needs at least one draw");
  const auto draws = range_draws(k, df, opts);
  const auto n = static_cast<double>(draws->size());
  const auto above = static_cast<double>(draws->end() - std::lower_bound(draws->begin(), draws->end(), q));
  const double p = above / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

std::vector<PairwiseResult> tukey_kramer(std::span<const double> means, std::span<const std::size_t> sizes,
                                         double residual_variance, double df, const StudentizedRangeOptions& opts) {
  if (means.size() != sizes.size()) throw ParameterError("group means and sizes differ in length");
  if (means.size() < 2) throw ParameterError("Tukey-Kramer needs at least 2 groups");
  if (residual_variance < 0.0) throw ParameterError("residual variance must be non-negative");
  std::vector<PairwiseResult> out;
  const int k = static_cast<int>(means.size());
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      if (sizes[a] == 0 || sizes[b] == 0) throw DataError("Tukey-Kramer on an empty group");
      PairwiseResult r;
      r.a = a;
      r.b = b;
      r.mean_diff = means[a] - means[b];
      if (residual_variance == 0.0) {
        r.q = r.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        r.p_adj = r.mean_diff == 0.0 ? 1.0 : 0.0;
      } else {
        const double se = std::sqrt(0.5 * residual_variance *
                                    (1.0 / static_cast<double>(sizes[a]) + 1.0 / static_cast<double>(sizes[b])));
        r.q = std::abs(r.mean_diff) / se;
        const auto mc = studentized_range_sf(r.q, k, df, opts);
        r.p_adj = mc.p;
        r.p_se = mc.se;
      }
      out.push_back(r);
    }
  }
  return out;
}

std::string significance(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// ---------------------------------------------------------------------------
// Group tests
// ---------------------------------------------------------------------------

namespace {

std::size_t group_count(std::span<const int> group) {
  if (group.empty()) throw DataError("no observations");
  const int g = *std::max_element(group.begin(), group.end()) + 1;
  if (*std::min_element(group.begin(), group.end()) < 0) throw ParameterError("group codes must be non-negative");
  std::vector<std::size_t> n(static_cast<std::size_t>(g), 0);
  for (int c : group) ++n[static_cast<std::size_t>(c)];
  for (std::size_t c = 0; c < n.size(); ++c) {
    if (n[c] == 0) throw DataError("group " + std::to_string(c) + " is empty");
  }
  return n.size();
}

double f_sf(double F, double d1, double d2) {
  if (std::isinf(F)) return 0.0;
  if (F <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), F));
}

struct LsFit {
  Eigen::VectorXd beta;
  double rss = 0.0;
};

LsFit least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const std::string> names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < X.cols(); ++i) {
      if (!cols.empty()) cols += ", ";
      cols += names[static_cast<std::size_t>(perm[i])];
    }
    throw DataError("rank-deficient design; collinear columns: " + cols);
  }
  LsFit f;
  f.beta = qr.solve(y);
  f.rss = (y - X * f.beta).squaredNorm();
  return f;
}

}  // namespace

GroupComparison ancova_group_test(std::span<const double> values, std::span<const int> group,
                                  const Eigen::MatrixXd& covariates, std::span<const std::string> covariate_names,
                                  const StudentizedRangeOptions& opts) {
  const auto n = static_cast<Eigen::Index>(values.size());
  if (group.size() != values.size() || covariates.rows() != n) {
    throw ParameterError("ANCOVA inputs differ in length");
  }
  if (covariate_names.size() != static_cast<std::size_t>(covariates.cols())) {
    throw ParameterError("covariate names do not match covariate columns");
  }
  const auto G = static_cast<Eigen::Index>(group_count(group));
  if (G < 2) throw DataError("ANCOVA needs at least 2 groups");
  const Eigen::Index c = covariates.cols();
  const Eigen::Index p = G + c;
  if (n <= p) {
    throw DataError("ANCOVA needs more observations (" + std::to_string(n) + ") than parameters (" +
                    std::to_string(p) + ")");
  }

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  std::vector<std::string> names{"intercept"};
  for (Eigen::Index g = 1; g < G; ++g) names.push_back("group" + std::to_string(g));
  names.insert(names.end(), covariate_names.begin(), covariate_names.end());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = values[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    const int g = group[static_cast<std::size_t>(i)];
    if (g > 0) X(i, g) = 1.0;
    X.block(i, G, 1, c) = covariates.row(i);
  }
  Eigen::MatrixXd Xr(n, 1 + c);
  Xr.col(0) = X.col(0);
  Xr.rightCols(c) = covariates;
  std::vector<std::string> reduced_names{"intercept"};
  reduced_names.insert(reduced_names.end(), covariate_names.begin(), covariate_names.end());

  const auto full = least_squares(X, y, names);
  const auto reduced = least_squares(Xr, y, reduced_names);

  GroupComparison out;
  out.df_effect = static_cast<double>(G - 1);
  out.df_residual = static_cast<double>(n - p);
  out.residual_variance = full.rss / out.df_residual;
  const double gain = std::max(reduced.rss - full.rss, 0.0);
  const double tol = 1e-12 * std::max(1.0, reduced.rss);
  if (out.residual_variance <= 1e-300) {
    out.F = gain > tol ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    out.F = (gain / out.df_effect) / out.residual_variance;
  }
  out.p = f_sf(out.F, out.df_effect, out.df_residual);

  const Eigen::VectorXd cov_mean = covariates.colwise().mean().transpose();
  const double common = full.beta[0] + full.beta.tail(c).dot(cov_mean);
  for (Eigen::Index g = 0; g < G; ++g) out.adjusted_means.push_back(common + (g > 0 ? full.beta[g] : 0.0));

  const Eigen::MatrixXd XtX_inv = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  for (Eigen::Index a = 0; a < G; ++a) {
    for (Eigen::Index b = a + 1; b < G; ++b) {
      Eigen::VectorXd contrast = Eigen::VectorXd::Zero(p);
      if (a > 0) contrast[a] = 1.0;
      if (b > 0) contrast[b] = -1.0;
      PairwiseResult r;
      r.a = static_cast<std::size_t>(a);
      r.b = static_cast<std::size_t>(b);
      r.mean_diff = out.adjusted_means[static_cast<std::size_t>(a)] - out.adjusted_means[static_cast<std::size_t>(b)];
      const double var = out.residual_variance * contrast.dot(XtX_inv * contrast);
      if (var <= 0.0) {
        r.q = r.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        r.p_adj = r.mean_diff == 0.0 ? 1.0 : 0.0;
      } else {
        r.q = std::abs(r.mean_diff) / std::sqrt(0.5 * var);
        const auto mc = studentized_range_sf(r.q, static_cast<int>(G), out.df_residual, opts);
        r.p_adj = mc.p;
        r.p_se = mc.se;
      }
      out.pairs.push_back(r);
    }
  }
  return out;
}

TestResult oneway_anova(std::span<const double> values, std::span<const int> group) {
  if (values.size() != group.size()) throw ParameterError("ANOVA inputs differ in length");
  const std::size_t G = group_count(group);
  const std::size_t n = values.size();
  if (G < 2) throw DataError("ANOVA needs at least 2 groups");
  if (n <= G) throw DataError("ANOVA needs more observations than groups");
  std::vector<double> sum(G, 0.0), cnt(G, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum[static_cast<std::size_t>(group[i])] += values[i];
    cnt[static_cast<std::size_t>(group[i])] += 1.0;
    total += values[i];
  }
  const double grand = total / static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    const double m = sum[g] / cnt[g];
    ssb += cnt[g] * (m - grand) * (m - grand);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(group[i]);
    const double d = values[i] - sum[g] / cnt[g];
    ssw += d * d;
  }
  TestResult r;
  r.df1 = static_cast<double>(G - 1);
  r.df2 = static_cast<double>(n - G);
  if (ssw == 0.0) {
    r.statistic = ssb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.statistic = (ssb / r.df1) / (ssw / r.df2);
  }
  r.p = f_sf(r.statistic, r.df1, r.df2);
  return r;
}

TestResult chi_square(const std::vector<std::vector<double>>& table) {
  const std::size_t R = table.size();
  if (R < 2) throw ParameterError("chi-squared test needs at least 2 rows");
  const std::size_t C = table[0].size();
  if (C < 2) throw ParameterError("chi-squared test needs at least 2 columns");
  std::vector<double> row(R, 0.0), col(C, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    if (table[i].size() != C) throw ParameterError("chi-squared table is ragged");
    for (std::size_t j = 0; j < C; ++j) {
      if (table[i][j] < 0.0) throw ParameterError("negative count in chi-squared table");
      row[i] += table[i][j];
      col[j] += table[i][j];
      total += table[i][j];
    }
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const double e = row[i] * col[j] / total;
      if (!(e > 0.0)) throw DataError("chi-squared table has a zero expected count");
      stat += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  }
  TestResult r;
  r.statistic = stat;
  r.df1 = static_cast<double>((R - 1) * (C - 1));
  r.p = boost::math::gamma_q(0.5 * r.df1, 0.5 * stat);
  return r;
}

// ---------------------------------------------------------------------------
// Cohort analysis
// ---------------------------------------------------------------------------

std::vector<SubjectSummary> summarize_subjects(std::span<const FeatureRow> rows, std::span<const SubjectMeta> subjects) {
  std::map<std::string, std::pair<std::array<double, kNumCopFeatures>, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& [sum, n] = acc[r.subject_id];
    for (std::size_t j = 0; j < kNumCopFeatures; ++j) sum[j] += r.values[j];
    ++n;
  }
  std::vector<SubjectSummary> out;
  for (const auto& meta : subjects) {
    auto it = acc.find(meta.id);
    if (it == acc.end()) {
      warn("subject '" + meta.id + "' has no feature rows; left out of the statistics");
      continue;
    }
    SubjectSummary s;
    s.meta = meta;
    s.segments = it->second.second;
    for (std::size_t j = 0; j < kNumCopFeatures; ++j) {
      s.cop[j] = it->second.first[j] / static_cast<double>(s.segments);
    }
    out.push_back(std::move(s));
  }
  return out;
}

StatsReport analyze_cohort(std::span<const SubjectSummary> subjects, const StudentizedRangeOptions& opts) {
  StatsReport report;
  std::map<Group, int> code;
  for (Group g : {Group::MCI_LB, Group::MCI_AD, Group::CN, Group::UNKNOWN}) {
    const bool present = std::any_of(subjects.begin(), subjects.end(), [&](const auto& s) { return s.meta.group == g; });
    if (present) {
      code[g] = static_cast<int>(report.groups.size());
      report.groups.emplace_back(to_string(g));
    }
  }
  std::vector<int> group;
  for (const auto& s : subjects) group.push_back(code.at(s.meta.group));

  const std::vector<std::string> cov_names{"age", "sex", "weight", "height"};
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(subjects.size()), 4);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& m = subjects[i].meta;
    cov.row(static_cast<Eigen::Index>(i)) << m.age, m.sex == Sex::F ? 1.0 : 0.0, m.weight, m.height;
  }
  std::vector<double> v(subjects.size());
  if (report.groups.size() >= 2) {
    for (std::size_t j = 0; j < kNumCopFeatures; ++j) {
      for (std::size_t i = 0; i < subjects.size(); ++i) v[i] = subjects[i].cop[j];
      auto cmp = ancova_group_test(v, group, cov, cov_names, opts);
      cmp.feature = std::string(kCopFeatureNames[j]);
      report.comparisons.push_back(std::move(cmp));
    }
  } else {
    warn("fewer than 2 diagnostic groups; group comparisons skipped");
  }

  // Correlations over pairwise-complete subjects.
  using Getter = std::function<std::optional<double>(const SubjectSummary&)>;
  std::vector<Getter> get;
  for (std::size_t j = 0; j < kNumCopFeatures; ++j) {
    report.variables.emplace_back(kCopFeatureNames[j]);
    get.push_back([j](const SubjectSummary& s) { return std::optional<double>(s.cop[j]); });
  }
  report.variables.insert(report.variables.end(), {"age", "education", "height", "weight"});
  get.push_back([](const SubjectSummary& s) { return std::optional<double>(s.meta.age); });
  get.push_back([](const SubjectSummary& s) { return std::optional<double>(s.meta.education); });
  get.push_back([](const SubjectSummary& s) { return std::optional<double>(s.meta.height); });
  get.push_back([](const SubjectSummary& s) { return std::optional<double>(s.meta.weight); });
  for (auto t : kNeuropsychTests) {
    report.variables.emplace_back(to_string(t));
    get.push_back([t](const SubjectSummary& s) -> std::optional<double> {
      auto it = s.meta.neuropsych.find(t);
      if (it == s.meta.neuropsych.end()) return std::nullopt;
      return it->second;
    });
  }
  const std::size_t V = get.size();
  report.correlation.assign(V, std::vector<std::optional<double>>(V));
  for (std::size_t a = 0; a < V; ++a) {
    for (std::size_t b = a; b < V; ++b) {
      std::vector<double> x, y;
      for (const auto& s : subjects) {
        auto xa = get[a](s), yb = get[b](s);
        if (xa && yb) {
          x.push_back(*xa);
          y.push_back(*yb);
        }
      }
      std::optional<double> rho;
      if (x.size() >= 3) rho = spearman(x, y);
      report.correlation[a][b] = report.correlation[b][a] = rho;
    }
  }

  // Demographics.
  if (report.groups.size() >= 2) {
    for (std::size_t k = 0; k < V - kNumCopFeatures; ++k) {
      const std::size_t idx = kNumCopFeatures + k;
      std::vector<double> vals;
      std::vector<int> grp;
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (auto val = get[idx](subjects[i])) {
          vals.push_back(*val);
          grp.push_back(group[i]);
        }
      }
      try {
        report.demographics.emplace_back(report.variables[idx], oneway_anova(vals, grp));
      } catch (const Error& e) {
        warn("ANOVA skipped for " + report.variables[idx] + ": " + e.what());
      }
    }
    std::vector<std::vector<double>> table(2, std::vector<double>(report.groups.size(), 0.0));
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      table[subjects[i].meta.sex == Sex::F ? 0 : 1][static_cast<std::size_t>(group[i])] += 1.0;
    }
    try {
      report.demographics.emplace_back("sex", chi_square(table));
    } catch (const Error& e) {
      warn(std::string("chi-squared test skipped for sex: ") + e.what());
    }
  }
  return report;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::span<const std::string> provenance) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  return out;
}

}  // namespace

void write_group_tests_csv(const StatsReport& r, const std::filesystem::path& path,
                           std::span<const std::string> provenance) {
  auto out = open_out(path, provenance);
  out << "feature,F,p,pair,mean_diff,p_adj,sig\n";
  for (const auto& c : r.comparisons) {
    for (const auto& p : c.pairs) {
      out << c.feature << ',' << detail::format_exact(c.F) << ',' << detail::format_exact(c.p) << ','
          << r.groups[p.a] << '-' << r.groups[p.b] << ',' << detail::format_exact(p.mean_diff) << ','
          << detail::format_exact(p.p_adj) << ',' << significance(p.p_adj) << '\n';
    }
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_correlation_csv(const StatsReport& r, const std::filesystem::path& path,
                           std::span<const std::string> provenance) {
  auto out = open_out(path, provenance);
  out << "variable";
  for (const auto& v : r.variables) out << ',' << v;
  out << '\n';
  for (std::size_t a = 0; a < r.variables.size(); ++a) {
    out << r.variables[a];
    for (std::size_t b = 0; b < r.variables.size(); ++b) {
      out << ',';
      if (r.correlation[a][b]) out << detail::format_exact(*r.correlation[a][b]);
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_demographics_csv(const StatsReport& r, const std::filesystem::path& path,
                            std::span<const std::string> provenance) {
  auto out = open_out(path, provenance);
  out << "variable,test,statistic,df1,df2,p\n";
  for (const auto& [name, t] : r.demographics) {
    const bool chi = name == "sex";
    out << name << ',' << (chi ? "chi2" : "anova") << ',' << detail::format_exact(t.statistic) << ','
        << detail::format_exact(t.df1) << ',';
    if (!chi) out << detail::format_exact(t.df2);
    out << ',' << detail::format_exact(t.p) << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace balance
