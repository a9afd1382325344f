#include "balance/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "balance/error.hpp"

namespace balance {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::LOGISTIC_L1: return "logistic";
    case ModelKind::SVM_RBF: return "svm";
    case ModelKind::KNN: return "knn";
  }
  return "logistic";
}

std::string_view to_string(ClassWeight w) { return w == ClassWeight::BALANCED ? "balanced" : "uniform"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "logistic" || text == "LOGISTIC_L1") return ModelKind::LOGISTIC_L1;
  if (text == "svm" || text == "SVM_RBF") return ModelKind::SVM_RBF;
  if (text == "knn" || text == "KNN") return ModelKind::KNN;
  throw ParameterError("model not supported: '" + std::string(text) +
                       "' (available: logistic, svm, knn)");
}

ClassWeight parse_class_weight(std::string_view text) {
  if (text == "balanced") return ClassWeight::BALANCED;
  if (text == "uniform" || text == "none") return ClassWeight::UNIFORM;
  throw ParameterError("unknown class weight '" + std::string(text) + "'");
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind));
  switch (kind) {
    case ModelKind::LOGISTIC_L1:
      j["C"] = C;
      j["class_weight"] = std::string(to_string(class_weight));
      break;
    case ModelKind::SVM_RBF:
      j["C"] = C;
      j["gamma"] = gamma;
      j["class_weight"] = std::string(to_string(class_weight));
      j["n_selected"] = n_selected;
      break;
    case ModelKind::KNN:
      j["n_neighbors"] = n_neighbors;
      j["n_selected"] = n_selected;
      break;
  }
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  s.C = j.value("C", s.C);
  s.gamma = j.value("gamma", s.gamma);
  s.class_weight = parse_class_weight(j.value("class_weight", std::string("uniform")));
  s.n_neighbors = j.value("n_neighbors", s.n_neighbors);
  s.n_selected = j.value("n_selected", s.n_selected);
  return s;
}

bool operator==(const ModelSpec& a, const ModelSpec& b) { return a.to_json() == b.to_json(); }

std::vector<double> class_weights(std::span<const int> labels, ClassWeight mode) {
  std::vector<double> w(labels.size(), 1.0);
  if (mode == ClassWeight::UNIFORM) return w;
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n = static_cast<double>(labels.size());
  const double neg = n - pos;
  if (pos == 0.0 || neg == 0.0) throw DataError("balanced class weights need both classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w[i] = labels[i] == 1 ? n / (2.0 * pos) : n / (2.0 * neg);
  }
  return w;
}

double TrainedModel::threshold() const { return spec.kind == ModelKind::SVM_RBF ? 0.0 : 0.5; }

Eigen::VectorXd TrainedModel::prepare(std::span<const double> raw) const {
  if (raw.size() != transform.features()) {
    throw ParameterError("row has " + std::to_string(raw.size()) + " features; model expects " +
                         std::to_string(transform.features()));
  }
  Eigen::VectorXd x(static_cast<Eigen::Index>(selected.size()));
  for (std::size_t k = 0; k < selected.size(); ++k) {
    x[static_cast<Eigen::Index>(k)] = transform.transform(selected[k], raw[selected[k]]);
  }
  return x;
}

Eigen::MatrixXd TrainedModel::prepare(const Eigen::MatrixXd& raw) const {
  if (static_cast<std::size_t>(raw.cols()) != transform.features()) {
    throw ParameterError("rows have " + std::to_string(raw.cols()) + " features; model expects " +
                         std::to_string(transform.features()));
  }
  Eigen::MatrixXd x(raw.rows(), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t k = 0; k < selected.size(); ++k) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      x(i, static_cast<Eigen::Index>(k)) =
          transform.transform(selected[k], raw(i, static_cast<Eigen::Index>(selected[k])));
    }
  }
  return x;
}

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Prediction predict_knn(const KnnParams& p, std::span<const double> x) {
  const auto n = static_cast<std::size_t>(p.rows.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double diff = p.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - x[c];
      d += diff * diff;
    }
    dist[i] = {d, i};
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(p.k), n);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::size_t pos = 0;
  double dpos = 0.0, dneg = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const double d = std::sqrt(dist[r].first);
    if (p.labels[dist[r].second] == 1) {
      ++pos;
      dpos += d;
    } else {
      dneg += d;
    }
  }
  Prediction out;
  out.score = static_cast<double>(pos) / static_cast<double>(k);
  if (2 * pos > k) {
    out.label = 1;
  } else if (2 * pos < k) {
    out.label = 0;
  } else {
    const double mean_pos = dpos / static_cast<double>(pos);
    const double mean_neg = dneg / static_cast<double>(k - pos);
    out.label = mean_pos < mean_neg ? 1 : 0;
  }
  return out;
}

}  // namespace

Prediction TrainedModel::predict_prepared(std::span<const double> x) const {
  if (x.size() != selected.size()) throw ParameterError("prepared row dimension mismatch");
  return std::visit(
      [&](const auto& p) -> Prediction {
        using T = std::decay_t<decltype(p)>;
        const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
        if constexpr (std::is_same_v<T, LogisticParams>) {
          const double s = sigmoid(p.weights.dot(v) + p.intercept);
          return {s, s >= 0.5 ? 1 : 0};
        } else if constexpr (std::is_same_v<T, SvmParams>) {
          double f = p.bias;
          for (Eigen::Index i = 0; i < p.support_vectors.rows(); ++i) {
            f += p.coef[i] * std::exp(-p.gamma * (p.support_vectors.row(i).transpose() - v).squaredNorm());
          }
          return {f, f > 0.0 ? 1 : 0};
        } else {
          return predict_knn(p, x);
        }
      },
      params);
}

Prediction predict_score(const TrainedModel& model, std::span<const double> raw_row) {
  const Eigen::VectorXd x = model.prepare(raw_row);
  return model.predict_prepared(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

std::vector<Prediction> predict_scores(const TrainedModel& model, const Eigen::MatrixXd& raw_rows) {
  if (static_cast<std::size_t>(raw_rows.cols()) != model.transform.features()) {
    throw ParameterError("rows have " + std::to_string(raw_rows.cols()) + " features; model expects " +
                         std::to_string(model.transform.features()));
  }
  return predict_transformed(model, model.transform.transform(raw_rows));
}

std::vector<Prediction> predict_transformed(const TrainedModel& model, const Eigen::MatrixXd& transformed) {
  Eigen::MatrixXd X(transformed.rows(), static_cast<Eigen::Index>(model.selected.size()));
  for (std::size_t k = 0; k < model.selected.size(); ++k) {
    X.col(static_cast<Eigen::Index>(k)) = transformed.col(static_cast<Eigen::Index>(model.selected[k]));
  }
  std::vector<Prediction> out(static_cast<std::size_t>(X.rows()));
  if (const auto* svm = std::get_if<SvmParams>(&model.params)) {
    const Eigen::MatrixXd K = rbf_kernel(X, svm->support_vectors, svm->gamma);
    const Eigen::VectorXd f = (K * svm->coef).array() + svm->bias;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      out[static_cast<std::size_t>(i)] = {f[i], f[i] > 0.0 ? 1 : 0};
    }
    return out;
  }
  Eigen::VectorXd row(X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    row = X.row(i).transpose();
    out[static_cast<std::size_t>(i)] =
        model.predict_prepared(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

std::vector<std::size_t> rank_features_l1(const Eigen::MatrixXd& transformed, std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  if (pos < 2 || neg < 2) throw DataError("feature ranking needs at least 2 rows per class");
  const auto w = class_weights(labels, ClassWeight::BALANCED);
  const auto fit = fit_logistic_l1(transformed, labels, w, 1.0);
  std::vector<std::size_t> order(static_cast<std::size_t>(transformed.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(fit.weights[static_cast<Eigen::Index>(a)]) >
           std::abs(fit.weights[static_cast<Eigen::Index>(b)]);
  });
  return order;
}

PreparedTraining prepare_training(const Eigen::MatrixXd& raw, std::span<const int> labels,
                                  bool need_ranking) {
  if (static_cast<std::size_t>(raw.rows()) != labels.size()) {
    throw ParameterError("training rows and labels disagree in size");
  }
  PreparedTraining p;
  p.transform = QuantileTransform::fit(raw);
  p.transformed = p.transform.transform(raw);
  p.labels.assign(labels.begin(), labels.end());
  if (need_ranking) p.ranking = rank_features_l1(p.transformed, labels);
  return p;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(cols[k]));
  }
  return out;
}

}  // namespace

TrainedModel fit(const ModelSpec& spec, const PreparedTraining& prepared) {
  const auto& y = prepared.labels;
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw DataError("training labels contain a single class");
  }
  TrainedModel model;
  model.spec = spec;
  model.transform = prepared.transform;
  const auto d = static_cast<std::size_t>(prepared.transformed.cols());

  if (spec.kind == ModelKind::LOGISTIC_L1) {
    model.selected.resize(d);
    std::iota(model.selected.begin(), model.selected.end(), 0);
    const auto w = class_weights(y, spec.class_weight);
    const auto f = fit_logistic_l1(prepared.transformed, y, w, spec.C);
    model.params = LogisticParams{f.weights, f.intercept};
    return model;
  }

  if (prepared.ranking.size() != d) throw ParameterError("feature ranking was not prepared");
  const auto n_sel = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(spec.n_selected, 1)), 1, d);
  model.selected.assign(prepared.ranking.begin(), prepared.ranking.begin() + static_cast<std::ptrdiff_t>(n_sel));
  const Eigen::MatrixXd X = select_columns(prepared.transformed, model.selected);

  if (spec.kind == ModelKind::KNN) {
    if (spec.n_neighbors < 1) throw ParameterError("n_neighbors must be >= 1");
    model.params = KnnParams{X, y, spec.n_neighbors};
    return model;
  }

  if (!(spec.C > 0.0) || !(spec.gamma > 0.0)) throw ParameterError("SVM C and gamma must be positive");
  const auto w = class_weights(y, spec.class_weight);
  std::vector<double> box(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) box[i] = spec.C * w[i];
  const Eigen::MatrixXd K = rbf_kernel(X, X, spec.gamma);
  const auto sol = fit_svm_dual(K, y, box);
  SvmParams p;
  p.gamma = spec.gamma;
  p.bias = sol.bias;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) {
    if (sol.alpha[i] > 0.0) sv.push_back(i);
  }
  p.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  p.coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    const auto i = sv[k];
    p.support_vectors.row(static_cast<Eigen::Index>(k)) = X.row(i);
    p.coef[static_cast<Eigen::Index>(k)] = sol.alpha[i] * (y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0);
  }
  model.params = std::move(p);
  return model;
}

TrainedModel fit(const ModelSpec& spec, const Eigen::MatrixXd& raw, std::span<const int> labels) {
  return fit(spec, prepare_training(raw, labels, spec.uses_selection()));
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  Eigen::Index i = 0;
  for (const auto& row : j) {
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    ++i;
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j;
  j["format"] = std::string(kModelFormat);
  j["spec"] = spec.to_json();
  j["transform"] = transform.to_json();
  j["selected"] = selected;
  nlohmann::json p;
  std::visit(
      [&](const auto& params) {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, LogisticParams>) {
          p["weights"] = vector_to_json(params.weights);
          p["intercept"] = params.intercept;
        } else if constexpr (std::is_same_v<T, SvmParams>) {
          p["gamma"] = params.gamma;
          p["bias"] = params.bias;
          p["coef"] = vector_to_json(params.coef);
          p["support_vectors"] = matrix_to_json(params.support_vectors);
        } else {
          p["k"] = params.k;
          p["labels"] = params.labels;
          p["rows"] = matrix_to_json(params.rows);
        }
      },
      params);
  j["params"] = std::move(p);
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw ParseError("unsupported model format '" + j.at("format").get<std::string>() + "'");
    }
    TrainedModel m;
    m.spec = ModelSpec::from_json(j.at("spec"));
    m.transform = QuantileTransform::from_json(j.at("transform"));
    m.selected = j.at("selected").get<std::vector<std::size_t>>();
    const auto cols = static_cast<Eigen::Index>(m.selected.size());
    const auto& p = j.at("params");
    switch (m.spec.kind) {
      case ModelKind::LOGISTIC_L1:
        m.params = LogisticParams{vector_from_json(p.at("weights")), p.at("intercept").get<double>()};
        break;
      case ModelKind::SVM_RBF: {
        SvmParams s;
        s.gamma = p.at("gamma").get<double>();
        s.bias = p.at("bias").get<double>();
        s.coef = vector_from_json(p.at("coef"));
        s.support_vectors = matrix_from_json(p.at("support_vectors"), cols);
        m.params = std::move(s);
        break;
      }
      case ModelKind::KNN: {
        KnnParams k;
        k.k = p.at("k").get<int>();
        k.labels = p.at("labels").get<std::vector<int>>();
        k.rows = matrix_from_json(p.at("rows"), cols);
        m.params = std::move(k);
        break;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what());
  }
}

}  // namespace balance
