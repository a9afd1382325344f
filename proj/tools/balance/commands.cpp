#include "commands.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/evaluation.hpp"
#include "balance/explain.hpp"
#include "balance/log.hpp"
#include "balance/random.hpp"
#include "balance/simgen.hpp"
#include "balance/stats.hpp"
#include "balance/text.hpp"

namespace fs = std::filesystem;

namespace balance::cli {

namespace {

template <class F>
auto in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StageError(stage, std::string("malformed JSON: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    throw StageError(stage, e.what());
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto t = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), std::max<std::size_t>(n, 1));
  if (t <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_extract_log(const std::vector<ExtractLogLine>& log, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "subject_id,frames,segments,interpolated_frames,status\n";
  for (const auto& l : log) {
    out << l.subject_id << ',' << l.frames << ',' << l.segments << ',' << l.interpolated << ',' << l.status << '\n';
  }
}

std::string fold_file(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fold_%02zu.json", f);
  return buf;
}

// Feature rows, either from a features CSV whose extraction hash matches, or freshly extracted.
std::vector<FeatureRow> load_or_extract(const RunConfig& cfg, bool skip_bad, std::string* input,
                                        Extraction* extraction) {
  if (!cfg.features_csv.empty()) {
    std::vector<std::string> prov;
    auto rows = in_stage("extract", [&] { return read_feature_csv(cfg.features_csv, &prov); });
    const auto h = provenance_value(prov, "extraction_hash");
    if (!h) {
      warn("features file '" + cfg.features_csv.string() + "' carries no extraction hash; its settings are unchecked");
    } else if (*h != cfg.extraction_hash()) {
      throw StageError("extract", "features file '" + cfg.features_csv.string() + "' was extracted with settings " +
                                      *h + ", but this run uses " + cfg.extraction_hash() +
                                      "; re-run extract or drop the features input");
    }
    if (input) *input = cfg.features_csv.string();
    return rows;
  }
  if (cfg.manifest.empty()) throw StageError("extract", "no input: give --manifest or --features");
  auto ex = extract_manifest(cfg, cfg.manifest, skip_bad);
  if (input) *input = cfg.manifest.string();
  auto rows = ex.rows;
  if (extraction) *extraction = std::move(ex);
  return rows;
}

}  // namespace

Extraction extract_manifest(const RunConfig& cfg, const fs::path& manifest_path, bool skip_bad) {
  const Manifest manifest = in_stage("manifest", [&] { return read_manifest(manifest_path); });
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.meta.id).second) {
      throw StageError("manifest", "duplicate subject id '" + e.meta.id + "' in '" + manifest_path.string() + "'");
    }
  }
  if (manifest.entries.empty()) warn("manifest '" + manifest_path.string() + "' lists no subjects");

  const auto base = manifest_path.parent_path();
  const std::size_t n = manifest.entries.size();
  std::vector<std::vector<FeatureRow>> rows(n);
  std::vector<ExtractLogLine> log(n);
  std::vector<std::string> failure(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    auto& line = log[i];
    line.subject_id = e.meta.id;
    std::string stage = "load";
    try {
      check_invariants(e.meta);
      const auto path = e.recording.is_absolute() ? e.recording : base / e.recording;
      const RawRecording rec = load_recording(path, e.meta);
      line.frames = rec.frames.size();
      stage = "validate";
      check_invariants(rec);
      line.interpolated = validate_recording(rec).zero_force_frames.size();
      stage = "preprocess";
      const CopSeries series = preprocess_recording(rec, cfg.preprocess);
      const auto segments = segment_series(series, e.meta.id, cfg.preprocess.window, cfg.preprocess.stride);
      line.segments = segments.size();
      stage = "features";
      const Covariates cov = covariates_from(e.meta);
      for (const auto& seg : segments) {
        auto row = compute_features(seg, cfg.features);
        row.group = e.meta.group;
        row.covariates = cov;
        rows[i].push_back(std::move(row));
      }
      line.status = "ok";
    } catch (const Error& err) {
      failure[i] = stage + ": subject '" + e.meta.id + "': " + err.what();
      line.status = "skipped: " + stage;
      rows[i].clear();
      line.segments = 0;
    }
  });

  Extraction out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!failure[i].empty()) {
      if (!skip_bad) {
        const auto colon = failure[i].find(':');
        throw StageError(failure[i].substr(0, colon), failure[i].substr(colon + 2));
      }
      warn("skipping " + failure[i]);
      continue;
    }
    out.subjects.push_back(manifest.entries[i].meta);
    for (auto& r : rows[i]) out.rows.push_back(std::move(r));
  }
  out.log = std::move(log);
  return out;
}

void cmd_simulate(const SimulateArgs& args, const RunConfig& cfg, const fs::path& out) {
  in_stage("simulate", [&] {
    CohortSpec spec;
    if (args.profile) {
      spec = CohortSpec::from_json(read_json(*args.profile));
    } else {
      spec = sway_preset(args.preset, args.subjects, cfg.seed);
    }
    if (args.seed) spec.seed = *args.seed;
    spec.threads = cfg.threads;
    fs::create_directories(out);
    const auto cohort = generate_cohort(spec, out);
    write_json(spec.to_json(), out / "cohort_spec.json");
    std::cout << "wrote " << cohort.size() << " recordings and " << (out / "manifest.json").string() << '\n';
    return 0;
  });
}

void cmd_extract(const RunConfig& cfg, const fs::path& out, bool skip_bad) {
  if (cfg.manifest.empty()) throw StageError("extract", "no manifest given (--manifest)");
  const auto ex = extract_manifest(cfg, cfg.manifest, skip_bad);
  in_stage("extract", [&] {
    fs::create_directories(out);
    const auto prov = cfg.extraction_provenance();
    write_feature_csv(ex.rows, out / "features.csv", prov);
    write_extract_log(ex.log, out / "extract_log.csv");
    std::cout << "extracted " << ex.rows.size() << " segments from " << ex.subjects.size() << " subjects\n";
    return 0;
  });
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& out, bool skip_bad) {
  std::string input;
  Extraction extraction;
  const auto rows = load_or_extract(cfg, skip_bad, &input, &extraction);

  struct Line {
    std::string task, model;
    double accuracy, auc;
    std::size_t n;
  };
  std::vector<Line> summary;

  in_stage("evaluate", [&] {
    fs::create_directories(out);
    const auto features_path = out / "features.csv";
    if (cfg.features_csv.empty() || fs::weakly_canonical(cfg.features_csv) != fs::weakly_canonical(features_path)) {
      write_feature_csv(rows, features_path, cfg.extraction_provenance());
    }
    if (!extraction.log.empty()) write_extract_log(extraction.log, out / "extract_log.csv");
    const auto prov = cfg.provenance();

    for (const auto& task : cfg.tasks) {
      const FeatureMatrix m = assemble_matrix(rows, cfg.feature_set, task.labels());
      const FoldPlan plan = make_fold_plan(m.subjects(), cfg.k_outer, cfg.k_inner, cfg.seed);
      for (const auto& model_name : cfg.models) {
        const ModelKind kind = parse_model_kind(model_name);
        CvOptions opts;
        opts.budget = cfg.budget;
        opts.threads = cfg.threads;
        auto space = SearchSpace::defaults(kind);
        if (cfg.svm_C) {
          space.svm_C_lo = cfg.svm_C->first;
          space.svm_C_hi = cfg.svm_C->second;
        }
        opts.space = space;
        const CvReport report = run_nested_cv(m, kind, plan, opts);

        const auto dir = out / (task.name + "_" + std::string(to_string(kind)));
        fs::create_directories(dir / "models");
        auto rj = report.to_json();
        rj["task"] = task.name;
        rj["provenance"] = prov;
        write_json(rj, dir / "report.json");
        write_json(plan.to_json(), dir / "plan.json");
        write_predictions_csv(report, dir / "predictions.csv", prov);
        write_json({{"task", task.name},
                    {"model", std::string(to_string(kind))},
                    {"config", cfg.to_json()},
                    {"config_hash", cfg.hash()},
                    {"features", "../features.csv"}},
                   dir / "run.json");
        for (std::size_t f = 0; f < report.folds.size(); ++f) {
          const auto model = refit_fold(m, plan, report, f);
          write_json({{"config_hash", cfg.hash()}, {"fold", f}, {"model", model.to_json()}},
                     dir / "models" / fold_file(f));
        }
        summary.push_back({task.name, std::string(to_string(kind)), report.accuracy, report.auc, report.n_subjects});
      }
    }

    std::ofstream csv(out / "summary.csv");
    if (!csv) throw DataError("cannot write summary.csv");
    csv << "task,input,model,accuracy,auc,n_subjects\n";
    std::printf("%-14s %-10s %9s %7s %5s\n", "task", "model", "accuracy", "auc", "n");
    for (const auto& l : summary) {
      csv << l.task << ',' << std::string(to_string(cfg.feature_set)) << ',' << l.model << ','
          << detail::format_exact(l.accuracy) << ',' << detail::format_exact(l.auc) << ',' << l.n << '\n';
      std::printf("%-14s %-10s %9.3f %7.3f %5zu\n", l.task.c_str(), l.model.c_str(), l.accuracy, l.auc, l.n);
    }
    return 0;
  });
}

void cmd_explain(const RunConfig& cfg, const fs::path& run_dir, const fs::path& out) {
  in_stage("explain", [&] {
    const auto run = read_json(run_dir / "run.json");
    const auto report_json = read_json(run_dir / "report.json");
    const auto plan = FoldPlan::from_json(read_json(run_dir / "plan.json"));
    const CvReport report = CvReport::from_json(report_json);

    RunConfig run_cfg;
    run_cfg.merge(run.at("config"));
    const std::string config_hash = run.at("config_hash").get<std::string>();
    if (run_cfg.hash() != config_hash) {
      throw ValidationError("run.json config does not match its recorded hash");
    }
    const auto rprov = report_json.value("provenance", std::vector<std::string>{});
    if (provenance_value(rprov, "config_hash") != config_hash) {
      throw ValidationError("report.json was produced by a different configuration than run.json");
    }

    const fs::path features_path = run_dir / run.at("features").get<std::string>();
    if (!fs::exists(features_path)) throw DataError("missing file '" + features_path.string() + "'");
    std::vector<std::string> fprov;
    const auto rows = read_feature_csv(features_path, &fprov);
    const auto fh = provenance_value(fprov, "extraction_hash");
    if (fh && *fh != run_cfg.extraction_hash()) {
      throw ValidationError("features file '" + features_path.string() + "' does not match the run's extraction settings");
    }
    const Task task = parse_task(run.at("task").get<std::string>());
    const FeatureMatrix m = assemble_matrix(rows, report.feature_set, task.labels());

    std::vector<FoldExplanation> folds;
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
      const auto mj = read_json(run_dir / "models" / fold_file(f));
      if (mj.at("config_hash").get<std::string>() != config_hash) {
        throw ValidationError("model " + fold_file(f) + " was produced by a different configuration");
      }
      FoldExplanation fe{TrainedModel::from_json(mj.at("model")), {}, {}};
      const auto train_ids = plan.outer_training(f);
      const auto train = rows_of(m, train_ids);
      const auto test = rows_of(m, plan.outer[f]);
      fe.background = m.values(train, Eigen::all);
      fe.rows = m.values(test, Eigen::all);
      folds.push_back(std::move(fe));
    }

    ShapOptions opts;
    opts.n_samples = cfg.shap_samples;
    opts.seed = run_cfg.seed;
    opts.threads = cfg.threads;
    const ShapSummary s = summarize_shap(report, folds, opts);

    fs::create_directories(out);
    auto prov = run_cfg.provenance();
    write_shap_csv(s, out / "shap_summary.csv", prov);
    std::cout << "explained " << s.n_rows << " segments; top features:";
    const auto rank = s.ranking();
    for (std::size_t i = 0; i < std::min<std::size_t>(rank.size(), 5); ++i) std::cout << ' ' << s.feature_names[rank[i]];
    std::cout << '\n';
    return 0;
  });
}

void cmd_stats(const RunConfig& cfg, const fs::path& out, bool skip_bad) {
  if (cfg.manifest.empty()) throw StageError("stats", "stats needs the manifest for subject metadata (--manifest)");
  std::vector<FeatureRow> rows;
  std::vector<SubjectMeta> metas;
  if (!cfg.features_csv.empty()) {
    rows = load_or_extract(cfg, skip_bad, nullptr, nullptr);
    const Manifest manifest = in_stage("manifest", [&] { return read_manifest(cfg.manifest); });
    for (const auto& e : manifest.entries) metas.push_back(e.meta);
  } else {
    auto ex = extract_manifest(cfg, cfg.manifest, skip_bad);
    rows = std::move(ex.rows);
    metas = std::move(ex.subjects);
  }
  in_stage("stats", [&] {
    const auto subjects = summarize_subjects(rows, metas);
    StudentizedRangeOptions opts;
    opts.draws = cfg.mc_draws;
    opts.seed = derive_seed(cfg.seed, {0x5EED});
    const StatsReport r = analyze_cohort(subjects, opts);
    fs::create_directories(out);
    const auto prov = cfg.provenance();
    write_group_tests_csv(r, out / "group_tests.csv", prov);
    write_correlation_csv(r, out / "correlations.csv", prov);
    write_demographics_csv(r, out / "demographics.csv", prov);
    std::cout << "analysed " << subjects.size() << " subjects in " << r.groups.size() << " groups\n";
    return 0;
  });
}

}  // namespace balance::cli
