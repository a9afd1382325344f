#include <algorithm>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/features.hpp"
#include "balance/pipeline.hpp"

namespace balance {

QuantileTransform QuantileTransform::fit(const Eigen::MatrixXd& rows) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (n < 10) throw DataError("quantile transform needs at least 10 training rows");
  QuantileTransform t;
  const std::size_t L = std::min(kMaxLandmarks, n);
  t.references_.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    t.references_[i] = static_cast<double>(i) / static_cast<double>(L - 1);
  }
  std::vector<double> col(n);
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rows(static_cast<Eigen::Index>(i), j);
    std::sort(col.begin(), col.end());
    std::vector<double> q(L);
    for (std::size_t i = 0; i < L; ++i) q[i] = percentile_sorted(col, 100.0 * t.references_[i]);
    // Interpolation round-off must not break monotonicity.
    for (std::size_t i = 1; i < L; ++i) q[i] = std::max(q[i], q[i - 1]);
    t.landmarks_.push_back(std::move(q));
  }
  return t;
}

double QuantileTransform::transform(std::size_t feature, double value) const {
  const auto& q = landmarks_.at(feature);
  const auto& r = references_;
  if (q.front() == q.back()) return 0.0;
  const std::size_t L = q.size();

  double cdf;
  if (value <= q.front()) {
    cdf = 0.0;
  } else if (value >= q.back()) {
    cdf = 1.0;
  } else {
    // Average of the interpolations from the left and from the right so that runs of
    // tied landmarks map to the middle of their CDF plateau.
    const auto hi = static_cast<std::size_t>(std::upper_bound(q.begin(), q.end(), value) - q.begin());
    const std::size_t i = hi - 1;
    const double forward = r[i] + (value - q[i]) / (q[i + 1] - q[i]) * (r[i + 1] - r[i]);
    const auto k = static_cast<std::size_t>(std::lower_bound(q.begin(), q.end(), value) - q.begin());
    const double backward = r[k - 1] + (value - q[k - 1]) / (q[k] - q[k - 1]) * (r[k] - r[k - 1]);
    cdf = 0.5 * (forward + backward);
  }
  const double eps = 1.0 / (2.0 * static_cast<double>(L));
  cdf = std::clamp(cdf, eps, 1.0 - eps);
  const double z = boost::math::quantile(boost::math::normal(), cdf);
  return std::clamp(z, -kClip, kClip);
}

Eigen::MatrixXd QuantileTransform::transform(const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != features()) {
    throw ParameterError("row dimension " + std::to_string(rows.cols()) +
                         " does not match transform dimension " + std::to_string(features()));
  }
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      out(i, j) = transform(static_cast<std::size_t>(j), rows(i, j));
    }
  }
  return out;
}

nlohmann::json QuantileTransform::to_json() const {
  nlohmann::json j;
  j["references"] = references_;
  j["landmarks"] = landmarks_;
  return j;
}

QuantileTransform QuantileTransform::from_json(const nlohmann::json& j) {
  QuantileTransform t;
  t.references_ = j.at("references").get<std::vector<double>>();
  t.landmarks_ = j.at("landmarks").get<std::vector<std::vector<double>>>();
  for (const auto& q : t.landmarks_) {
    if (q.size() != t.references_.size()) throw ParseError("quantile landmark count mismatch");
    if (!std::is_sorted(q.begin(), q.end())) throw ParseError("quantile landmarks not sorted");
  }
  return t;
}

}  // namespace balance
