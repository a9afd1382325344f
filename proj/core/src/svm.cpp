#include <algorithm>
#include <cmath>
#include <limits>

#include "balance/error.hpp"
#include "balance/pipeline.hpp"
#include "balance/text.hpp"

namespace balance {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma) {
  const Eigen::VectorXd na = A.rowwise().squaredNorm();
  const Eigen::VectorXd nb = B.rowwise().squaredNorm();
  Eigen::MatrixXd K = -2.0 * (A * B.transpose());
  K.colwise() += na;
  K.rowwise() += nb.transpose();
  return (-gamma * K.cwiseMax(0.0)).array().exp().matrix();
}

namespace {

constexpr double kTau = 1e-12;

}  // namespace

// Follows the decomposition method of LIBSVM (second-order working set selection,
// Fan, Chen and Lin 2005) on  min 0.5 a'Qa - e'a,  0 <= a_i <= C_i,  y'a = 0.
SvmFit fit_svm_dual(const Eigen::MatrixXd& K, std::span<const int> labels,
                    std::span<const double> box, const SvmOptions& opts) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (K.rows() != n || K.cols() != n || box.size() != labels.size()) {
    throw ParameterError("SVM kernel, labels and box constraints disagree in size");
  }
  std::vector<double> y(labels.size());
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y[i] = labels[i] == 1 ? 1.0 : -1.0;
    (labels[i] == 1 ? has_pos : has_neg) = true;
    if (!(box[i] > 0.0)) throw ParameterError("SVM box constraint must be positive");
  }
  if (!has_pos || !has_neg) throw DataError("SVM training needs both classes");

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
  auto C = [&](Eigen::Index i) { return box[static_cast<std::size_t>(i)]; };
  auto yv = [&](Eigen::Index i) { return y[static_cast<std::size_t>(i)]; };
  auto upper = [&](Eigen::Index i) { return alpha[i] >= C(i); };
  auto lower = [&](Eigen::Index i) { return alpha[i] <= 0.0; };
  auto in_up = [&](Eigen::Index t) { return yv(t) > 0 ? !upper(t) : !lower(t); };
  auto in_low = [&](Eigen::Index t) { return yv(t) > 0 ? !lower(t) : !upper(t); };

  const long cap = std::max(opts.max_iterations, 100L * static_cast<long>(n));
  long iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (in_up(t) && -yv(t) * G[t] >= gmax) {
        gmax = -yv(t) * G[t];
        i = t;
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -yv(t) * G[t];
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b > 0.0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0.0) a = kTau;
        const double score = -(b * b) / a;
        if (score <= best) {
          best = score;
          j = t;
        }
      }
    }
    gap = gmax - gmin;
    if (i < 0 || j < 0 || gap < opts.tolerance) break;
    if (iter >= cap) {
      throw ConvergenceError("SMO did not converge in " + std::to_string(cap) +
                             " iterations; max KKT violation " + detail::format_sig(gap, 6));
    }

    const double Ci = C(i), Cj = C(j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (quad <= 0.0) quad = kTau;
    if (yv(i) != yv(j)) {
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = Ci - diff;
        }
      } else if (alpha[j] > Cj) {
        alpha[j] = Cj;
        alpha[i] = Cj + diff;
      }
    } else {
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = sum - Ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) {
          alpha[j] = Cj;
          alpha[i] = sum - Cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    const double yi = yv(i), yj = yv(j);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double yt = yv(t);
      G[t] += yt * (yi * K(t, i) * dai + yj * K(t, j) * daj);
    }
  }

  // Bias: mean over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yv(t) * G[t];
    if (upper(t)) {
      if (yv(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (yv(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  SvmFit fit;
  fit.alpha = alpha;
  fit.bias = -rho;
  fit.iterations = iter;
  fit.max_violation = std::isfinite(gap) ? std::max(gap, 0.0) : 0.0;
  // G = Qa - e, so 0.5 a'Qa - e'a = 0.5 a'(G - e).
  fit.dual_objective = -0.5 * alpha.dot(G - Eigen::VectorXd::Ones(n));
  return fit;
}

}  // namespace balance
