#include "balance/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/random.hpp"
#include "balance/text.hpp"

namespace balance {

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> stratified_folds(const SubjectLabels& subjects, int k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ParameterError("fold count must be at least 2");
  if (subjects.size() < static_cast<std::size_t>(k)) {
    throw ParameterError("cannot split " + std::to_string(subjects.size()) + " subjects into " +
                         std::to_string(k) + " folds");
  }
  std::map<int, std::vector<std::string>> by_class;
  std::set<std::string> seen;
  for (const auto& [id, label] : subjects) {
    if (!seen.insert(id).second) throw DataError("subject '" + id + "' listed twice");
    by_class[label].push_back(id);
  }
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  // Positive class first so that, for small positive counts, its subjects spread first.
  for (auto it = by_class.rbegin(); it != by_class.rend(); ++it) {
    auto ids = it->second;
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(it->first)}));
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) {
      folds[next].push_back(id);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::string> FoldPlan::outer_training(std::size_t fold) const {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < outer.size(); ++f) {
    if (f == fold) continue;
    out.insert(out.end(), outer[f].begin(), outer[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json FoldPlan::to_json() const {
  return {{"seed", seed}, {"k_outer", k_outer}, {"k_inner", k_inner}, {"outer", outer}, {"inner", inner}};
}

FoldPlan FoldPlan::from_json(const nlohmann::json& j) {
  try {
    FoldPlan p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.k_outer = j.at("k_outer").get<int>();
    p.k_inner = j.at("k_inner").get<int>();
    p.outer = j.at("outer").get<std::vector<std::vector<std::string>>>();
    p.inner = j.at("inner").get<std::vector<std::vector<std::vector<std::string>>>>();
    if (p.inner.size() != p.outer.size()) throw ParseError("fold plan inner and outer fold counts differ");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fold plan: ") + e.what());
  }
}

FoldPlan make_fold_plan(const SubjectLabels& subjects, int k_outer, int k_inner, std::uint64_t seed) {
  std::map<int, int> counts;
  for (const auto& s : subjects) {
    if (s.second != 0 && s.second != 1) throw ParameterError("fold plan labels must be 0 or 1");
    ++counts[s.second];
  }
  for (int c : {0, 1}) {
    if (counts[c] < 2) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                      " subjects; at least 2 are needed");
    }
  }
  FoldPlan plan;
  plan.seed = seed;
  plan.k_outer = k_outer;
  plan.k_inner = k_inner;
  plan.outer = stratified_folds(subjects, k_outer, seed);

  std::unordered_map<std::string, int> label_of;
  for (const auto& [id, label] : subjects) label_of[id] = label;
  for (std::size_t f = 0; f < plan.outer.size(); ++f) {
    SubjectLabels train;
    for (const auto& id : plan.outer_training(f)) train.emplace_back(id, label_of[id]);
    int pos = 0;
    for (const auto& s : train) pos += s.second;
    const int smallest = std::min(pos, static_cast<int>(train.size()) - pos);
    if (k_inner > smallest) {
      throw ParameterError("outer fold " + std::to_string(f) + " leaves " + std::to_string(smallest) +
                           " training subjects in its smallest class; " + std::to_string(k_inner) +
                           " inner folds need at least that many");
    }
    plan.inner.push_back(stratified_folds(train, k_inner, derive_seed(seed, {0x1000 + f})));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

SearchSpace SearchSpace::defaults(ModelKind kind) {
  SearchSpace s;
  s.kind = kind;
  return s;
}

void SearchSpace::validate() const {
  auto check_range = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0) || !(hi >= lo)) throw ParameterError(std::string("invalid search range for ") + what);
  };
  check_range(logistic_C_lo, logistic_C_hi, "logistic C");
  check_range(svm_C_lo, svm_C_hi, "SVM C");
  check_range(gamma_lo, gamma_hi, "gamma");
  if (k_lo < 1 || k_hi < k_lo) throw ParameterError("invalid search range for n_neighbors");
  if (n_selected_lo < 1 || n_selected_hi < n_selected_lo) {
    throw ParameterError("invalid search range for n_selected");
  }
  if (class_weights.empty()) throw ParameterError("class weight choices are empty");
}

nlohmann::json SearchSpace::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind));
  switch (kind) {
    case ModelKind::LOGISTIC_L1:
      j["C"] = {logistic_C_lo, logistic_C_hi};
      break;
    case ModelKind::SVM_RBF:
      j["C"] = {svm_C_lo, svm_C_hi};
      j["gamma"] = {gamma_lo, gamma_hi};
      j["n_selected"] = {n_selected_lo, n_selected_hi};
      break;
    case ModelKind::KNN:
      j["n_neighbors"] = {k_lo, k_hi};
      j["n_selected"] = {n_selected_lo, n_selected_hi};
      break;
  }
  if (kind != ModelKind::KNN) {
    std::vector<std::string> w;
    for (auto c : class_weights) w.emplace_back(to_string(c));
    j["class_weight"] = w;
  }
  return j;
}

namespace {

double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

ModelSpec sample_spec(const SearchSpace& space, std::mt19937_64& rng) {
  ModelSpec s;
  s.kind = space.kind;
  auto pick_weight = [&] {
    const auto i = std::uniform_int_distribution<std::size_t>(0, space.class_weights.size() - 1)(rng);
    return space.class_weights[i];
  };
  switch (space.kind) {
    case ModelKind::LOGISTIC_L1:
      s.C = log_uniform(space.logistic_C_lo, space.logistic_C_hi, rng);
      s.class_weight = pick_weight();
      break;
    case ModelKind::SVM_RBF:
      s.C = log_uniform(space.svm_C_lo, space.svm_C_hi, rng);
      s.gamma = log_uniform(space.gamma_lo, space.gamma_hi, rng);
      s.class_weight = pick_weight();
      s.n_selected = uniform_int(space.n_selected_lo, space.n_selected_hi, rng);
      break;
    case ModelKind::KNN:
      s.n_neighbors = uniform_int(space.k_lo, space.k_hi, rng);
      s.n_selected = uniform_int(space.n_selected_lo, space.n_selected_hi, rng);
      break;
  }
  return s;
}

SearchResult random_search(const SearchSpace& space, int budget, std::uint64_t seed,
                           const TrialEvaluator& evaluate) {
  if (budget < 1) throw ParameterError("search budget must be at least 1");
  space.validate();
  SearchResult out;
  for (int t = 0; t < budget; ++t) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    Trial trial{sample_spec(space, rng), {}};
    trial.score = evaluate(trial.spec);
    const bool better = t == 0 || trial.score.accuracy > out.best_score.accuracy ||
                        (trial.score.accuracy == out.best_score.accuracy &&
                         trial.score.auc > out.best_score.auc);
    if (better) {
      out.best = trial.spec;
      out.best_score = trial.score;
    }
    out.trials.push_back(std::move(trial));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Voting and metrics
// ---------------------------------------------------------------------------

SubjectVote vote_subject(std::span<const Prediction> segments, double threshold) {
  if (segments.empty()) throw ParameterError("cannot vote on zero segment predictions");
  std::size_t pos = 0;
  double sum = 0.0;
  for (const auto& p : segments) {
    pos += p.label == 1 ? 1 : 0;
    sum += p.score;
  }
  SubjectVote v;
  v.score = sum / static_cast<double>(segments.size());
  const std::size_t neg = segments.size() - pos;
  if (pos != neg) {
    v.label = pos > neg ? 1 : 0;
  } else {
    v.label = v.score > threshold ? 1 : 0;
  }
  return v;
}

namespace {

void check_auc_input(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ParameterError("AUC scores and labels differ in length");
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw DataError("AUC needs both classes");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_auc_input(scores, labels);
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

double auc_trapezoid(std::span<const double> scores, std::span<const int> labels) {
  check_auc_input(scores, labels);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const auto P = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto N = static_cast<double>(labels.size()) - P;
  double tp = 0.0, fp = 0.0, area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0.0, dfp = 0.0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? dtp : dfp) += 1.0;
      ++j;
    }
    area += (dfp / N) * ((tp + tp + dtp) / (2.0 * P));
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area;
}

// ---------------------------------------------------------------------------
// Nested CV
// ---------------------------------------------------------------------------

std::vector<std::size_t> rows_of(const FeatureMatrix& m, std::span<const std::string> ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (wanted.count(m.subject_ids[r])) rows.push_back(r);
  }
  return rows;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::vector<std::string> complement(std::span<const std::string> all, std::span<const std::string> minus) {
  const std::set<std::string> drop(minus.begin(), minus.end());
  std::vector<std::string> out;
  for (const auto& s : all) {
    if (!drop.count(s)) out.push_back(s);
  }
  return out;
}

struct TrainingSide {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
  std::vector<std::string> subjects;
};

TrainingSide training_side(const FeatureMatrix& m, std::span<const std::string> ids) {
  const auto idx = rows_of(m, ids);
  TrainingSide t;
  t.rows = take_rows(m.values, idx);
  for (auto r : idx) {
    t.labels.push_back(m.labels[r]);
    t.subjects.push_back(m.subject_ids[r]);
  }
  return t;
}

// Test rows grouped by subject, subjects in sorted id order.
struct TestSide {
  Eigen::MatrixXd rows;
  std::vector<std::size_t> subject_of_row;
  std::vector<std::string> subjects;
  std::vector<int> labels;
};

TestSide test_side(const FeatureMatrix& m, std::span<const std::string> ids) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < sorted.size(); ++i) index[sorted[i]] = i;
  const auto idx = rows_of(m, sorted);
  TestSide t;
  t.rows = take_rows(m.values, idx);
  t.subjects = sorted;
  t.labels.assign(sorted.size(), -1);
  for (auto r : idx) {
    const auto s = index.at(m.subject_ids[r]);
    t.subject_of_row.push_back(s);
    t.labels[s] = m.labels[r];
  }
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    if (t.labels[s] < 0) throw DataError("subject '" + sorted[s] + "' has no feature rows");
  }
  return t;
}

std::vector<SubjectVote> vote_all(std::span<const Prediction> preds, std::span<const std::size_t> subject_of_row,
                                  std::size_t n_subjects, double threshold,
                                  std::vector<std::size_t>* segment_counts = nullptr) {
  std::vector<std::vector<Prediction>> per(n_subjects);
  for (std::size_t r = 0; r < preds.size(); ++r) per[subject_of_row[r]].push_back(preds[r]);
  std::vector<SubjectVote> out;
  for (const auto& p : per) {
    out.push_back(vote_subject(p, threshold));
    if (segment_counts) segment_counts->push_back(p.size());
  }
  return out;
}

}  // namespace

InnerEvaluator::InnerEvaluator(const FeatureMatrix& m, const FoldPlan& plan, std::size_t fold,
                               bool need_ranking, const FitObserver& observer) {
  const auto outer_train = plan.outer_training(fold);
  for (const auto& test_ids : plan.inner.at(fold)) {
    const auto train_ids = complement(outer_train, test_ids);
    auto train = training_side(m, train_ids);
    if (observer) observer(train.rows, train.labels, train.subjects);
    auto test = test_side(m, test_ids);
    Split s;
    s.train = prepare_training(train.rows, train.labels, need_ranking);
    s.test_rows = s.train.transform.transform(test.rows);
    s.test_subject = std::move(test.subject_of_row);
    s.subject_labels = std::move(test.labels);
    splits_.push_back(std::move(s));
  }
}

TrialScore InnerEvaluator::operator()(const ModelSpec& spec) const {
  TrialScore total;
  for (const auto& s : splits_) {
    try {
      const auto model = fit(spec, s.train);
      const auto preds = predict_transformed(model, s.test_rows);
      const auto votes = vote_all(preds, s.test_subject, s.subject_labels.size(), model.threshold());
      std::vector<double> scores;
      std::size_t correct = 0;
      for (std::size_t i = 0; i < votes.size(); ++i) {
        correct += votes[i].label == s.subject_labels[i] ? 1 : 0;
        scores.push_back(votes[i].score);
      }
      total.accuracy += static_cast<double>(correct) / static_cast<double>(votes.size());
      total.auc += auc(scores, s.subject_labels);
    } catch (const Error&) {
      // A failed fit contributes zero to this fold.
    }
  }
  const auto k = static_cast<double>(splits_.size());
  return {total.accuracy / k, total.auc / k};
}

namespace {

FoldResult run_outer_fold(const FeatureMatrix& m, ModelKind kind, const FoldPlan& plan, std::size_t fold,
                          const SearchSpace& space, const CvOptions& opts) {
  const bool need_ranking = kind != ModelKind::LOGISTIC_L1;
  const InnerEvaluator evaluator(m, plan, fold, need_ranking, opts.observer);
  const auto search = random_search(space, opts.budget, derive_seed(plan.seed, {0x2000 + fold}),
                                    [&](const ModelSpec& s) { return evaluator(s); });

  const auto train = training_side(m, plan.outer_training(fold));
  if (opts.observer) opts.observer(train.rows, train.labels, train.subjects);
  const auto prepared = prepare_training(train.rows, train.labels, need_ranking);
  const auto model = fit(search.best, prepared);

  const auto test = test_side(m, plan.outer[fold]);
  const auto preds = predict_transformed(model, prepared.transform.transform(test.rows));
  std::vector<std::size_t> counts;
  const auto votes = vote_all(preds, test.subject_of_row, test.subjects.size(), model.threshold(), &counts);

  FoldResult r;
  r.fold = static_cast<int>(fold);
  r.spec = search.best;
  r.inner_score = search.best_score;
  r.selected = model.selected;
  std::sort(r.selected.begin(), r.selected.end());
  for (std::size_t i = 0; i < votes.size(); ++i) {
    r.predictions.push_back({test.subjects[i], r.fold, test.labels[i], votes[i].label, votes[i].score, counts[i]});
  }
  return r;
}

}  // namespace

CvReport run_nested_cv(const FeatureMatrix& m, ModelKind kind, const FoldPlan& plan, const CvOptions& opts) {
  std::set<std::string> in_plan;
  for (const auto& f : plan.outer) {
    for (const auto& id : f) {
      if (!in_plan.insert(id).second) throw ParameterError("subject '" + id + "' appears in two outer folds");
    }
  }
  std::set<std::string> in_matrix(m.subject_ids.begin(), m.subject_ids.end());
  if (in_plan != in_matrix) {
    throw ParameterError("fold plan covers " + std::to_string(in_plan.size()) + " subjects but the matrix has " +
                         std::to_string(in_matrix.size()));
  }
  if (plan.inner.size() != plan.outer.size()) throw ParameterError("fold plan is missing inner folds");

  SearchSpace space = opts.space.value_or(SearchSpace::defaults(kind));
  space.kind = kind;
  space.validate();

  const std::size_t n_folds = plan.outer.size();
  std::vector<FoldResult> results(n_folds);
  std::vector<std::exception_ptr> errors(n_folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < n_folds;) {
      try {
        results[f] = run_outer_fold(m, kind, plan, f, space, opts);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp(opts.threads, 1, static_cast<int>(n_folds)));
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

  CvReport report;
  report.kind = kind;
  report.feature_set = m.feature_set;
  report.feature_names = m.feature_names;
  report.seed = plan.seed;
  report.budget = opts.budget;
  report.folds = std::move(results);
  report.occurrence.assign(m.cols(), 0.0);
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& f : report.folds) {
    for (auto j : f.selected) report.occurrence[j] += 1.0;
    for (const auto& p : f.predictions) {
      scores.push_back(p.score);
      labels.push_back(p.label);
      correct += p.label == p.predicted ? 1 : 0;
    }
  }
  for (auto& o : report.occurrence) o /= static_cast<double>(n_folds);
  report.n_subjects = scores.size();
  report.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  report.auc = auc(scores, labels);
  return report;
}

TrainedModel refit_fold(const FeatureMatrix& m, const FoldPlan& plan, const CvReport& report, std::size_t fold) {
  const auto train = training_side(m, plan.outer_training(fold));
  return fit(report.folds.at(fold).spec, train.rows, train.labels);
}

std::vector<SubjectPrediction> CvReport::predictions() const {
  std::vector<SubjectPrediction> out;
  for (const auto& f : folds) out.insert(out.end(), f.predictions.begin(), f.predictions.end());
  return out;
}

nlohmann::json CvReport::to_json() const {
  nlohmann::json j;
  j["summary"] = {{"accuracy", accuracy}, {"auc", auc}, {"n_subjects", n_subjects}};
  j["model"] = std::string(to_string(kind));
  j["feature_set"] = std::string(to_string(feature_set));
  j["feature_names"] = feature_names;
  j["seed"] = seed;
  j["budget"] = budget;
  nlohmann::json folds_j = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json fj;
    fj["fold"] = f.fold;
    fj["spec"] = f.spec.to_json();
    fj["inner_accuracy"] = f.inner_score.accuracy;
    fj["inner_auc"] = f.inner_score.auc;
    fj["selected"] = f.selected;
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : f.predictions) {
      preds.push_back({{"subject_id", p.subject_id},
                       {"label", p.label},
                       {"predicted", p.predicted},
                       {"score", p.score},
                       {"segments", p.segments}});
    }
    fj["predictions"] = std::move(preds);
    folds_j.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds_j);
  nlohmann::json occ = nlohmann::json::array();
  for (std::size_t i = 0; i < occurrence.size(); ++i) {
    occ.push_back({{"feature", feature_names.at(i)}, {"rate", occurrence[i]}});
  }
  j["occurrence"] = std::move(occ);
  return j;
}

CvReport CvReport::from_json(const nlohmann::json& j) {
  try {
    CvReport r;
    r.accuracy = j.at("summary").at("accuracy").get<double>();
    r.auc = j.at("summary").at("auc").get<double>();
    r.n_subjects = j.at("summary").at("n_subjects").get<std::size_t>();
    r.kind = parse_model_kind(j.at("model").get<std::string>());
    r.feature_set = parse_feature_set(j.at("feature_set").get<std::string>());
    r.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.budget = j.at("budget").get<int>();
    for (const auto& fj : j.at("folds")) {
      FoldResult f;
      f.fold = fj.at("fold").get<int>();
      f.spec = ModelSpec::from_json(fj.at("spec"));
      f.inner_score = {fj.at("inner_accuracy").get<double>(), fj.at("inner_auc").get<double>()};
      f.selected = fj.at("selected").get<std::vector<std::size_t>>();
      for (const auto& pj : fj.at("predictions")) {
        f.predictions.push_back({pj.at("subject_id").get<std::string>(), f.fold, pj.at("label").get<int>(),
                                 pj.at("predicted").get<int>(), pj.at("score").get<double>(),
                                 pj.at("segments").get<std::size_t>()});
      }
      r.folds.push_back(std::move(f));
    }
    for (const auto& o : j.at("occurrence")) r.occurrence.push_back(o.at("rate").get<double>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed CV report: ") + e.what());
  }
}

void write_predictions_csv(const CvReport& report, const std::filesystem::path& path,
                           std::span<const std::string> provenance) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "subject_id,fold,label,predicted,score,segments\n";
  for (const auto& p : report.predictions()) {
    out << p.subject_id << ',' << p.fold << ',' << p.label << ',' << p.predicted << ','
        << detail::format_exact(p.score) << ',' << p.segments << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace balance
