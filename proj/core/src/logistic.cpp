#include <cmath>

#include "balance/error.hpp"
#include "balance/pipeline.hpp"
#include "balance/text.hpp"

namespace balance {

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

struct SmoothPart {
  const Eigen::MatrixXd& X;
  Eigen::VectorXd sign;    // +1 / -1
  Eigen::VectorXd weight;  // sample weight / n

  double value(const Eigen::VectorXd& beta, double b) const {
    const Eigen::VectorXd z = X * beta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) f += weight[i] * softplus(-sign[i] * (z[i] + b));
    return f;
  }

  double value_and_gradient(const Eigen::VectorXd& beta, double b, Eigen::VectorXd& g_beta,
                            double& g_b) const {
    const Eigen::VectorXd z = X * beta;
    Eigen::VectorXd r(z.size());
    double f = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double m = sign[i] * (z[i] + b);
      f += weight[i] * softplus(-m);
      r[i] = -weight[i] * sign[i] * sigmoid(-m);
    }
    g_beta = X.transpose() * r;
    g_b = r.sum();
    return f;
  }
};

SmoothPart make_smooth(const Eigen::MatrixXd& X, std::span<const int> y,
                       std::span<const double> sample_weight) {
  const auto n = X.rows();
  if (static_cast<std::size_t>(n) != y.size() || y.size() != sample_weight.size()) {
    throw ParameterError("logistic regression inputs have inconsistent lengths");
  }
  if (n == 0) throw DataError("logistic regression on an empty training set");
  SmoothPart s{X, Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.sign[i] = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    s.weight[i] = sample_weight[static_cast<std::size_t>(i)] / static_cast<double>(n);
  }
  return s;
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y,
                          std::span<const double> sample_weight, double C,
                          const Eigen::VectorXd& weights, double intercept) {
  const auto s = make_smooth(X, y, sample_weight);
  const double lambda = 1.0 / (C * static_cast<double>(X.rows()));
  return s.value(weights, intercept) + lambda * weights.lpNorm<1>();
}

LogisticFit fit_logistic_l1(const Eigen::MatrixXd& X, std::span<const int> y,
                            std::span<const double> sample_weight, double C,
                            const LogisticOptions& opts) {
  if (!(C > 0.0)) throw ParameterError("regularisation strength C must be positive");
  const auto s = make_smooth(X, y, sample_weight);
  const double lambda = 1.0 / (C * static_cast<double>(X.rows()));
  const auto d = X.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  Eigen::VectorXd g_beta(d);
  double g_b = 0.0;
  double f = s.value_and_gradient(beta, b, g_beta, g_b);
  double objective = f;
  double step = 1.0;

  Eigen::VectorXd trial(d);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    double f_new = 0.0;
    double b_new = 0.0;
    for (int backtrack = 0;; ++backtrack) {
      const double thr = step * lambda;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = beta[j] - step * g_beta[j];
        trial[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
      }
      b_new = b - step * g_b;
      const Eigen::VectorXd delta = trial - beta;
      const double db = b_new - b;
      f_new = s.value(trial, b_new);
      const double model = f + g_beta.dot(delta) + g_b * db +
                           (delta.squaredNorm() + db * db) / (2.0 * step);
      if (f_new <= model + 1e-15 * std::abs(f)) break;
      step *= 0.5;
      if (backtrack > 60) {
        throw ConvergenceError("logistic line search failed at iteration " + std::to_string(it));
      }
    }
    const double new_objective = f_new + lambda * trial.lpNorm<1>();
    const double decrease = objective - new_objective;
    beta = trial;
    b = b_new;
    objective = std::min(objective, new_objective);
    if (opts.on_iteration) opts.on_iteration(new_objective);
    if (decrease < opts.tolerance) {
      return {beta, b, new_objective, it};
    }
    f = s.value_and_gradient(beta, b, g_beta, g_b);
    step *= 2.0;
  }
  throw ConvergenceError("L1 logistic regression did not converge in " +
                         std::to_string(opts.max_iterations) + " iterations (objective " +
                         detail::format_sig(objective, 10) + ")");
}

}  // namespace balance
