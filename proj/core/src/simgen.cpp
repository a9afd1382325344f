#include "balance/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/random.hpp"

namespace balance {

void SwayParams::validate() const {
  if (!(lambda > 0.0)) throw ParameterError("sway lambda must be positive");
  if (!(sigma >= 0.0)) throw ParameterError("sway sigma must be non-negative");
  if (!(anisotropy >= 0.0)) throw ParameterError("sway anisotropy must be non-negative");
  if (!(shared >= 0.0 && shared <= 1.0)) throw ParameterError("shared innovation fraction must be in [0, 1]");
  if (!(baseline_force > 0.0)) throw ParameterError("baseline force must be positive");
  if (!(force_noise >= 0.0 && force_noise < 0.5)) throw ParameterError("force noise fraction must be in [0, 0.5)");
  if (!(asymmetry >= 0.0 && asymmetry < 1.0)) throw ParameterError("force asymmetry must be in [0, 1)");
  if (!(duration >= 3.0)) throw ParameterError("duration must be at least 3 s");
}

void GroupProfile::validate() const {
  if (n_subjects < 1) throw ParameterError("a group profile needs at least one subject");
  if (group == Group::UNKNOWN) throw ParameterError("a group profile needs a diagnostic group");
  sway.validate();
  if (!(female_fraction >= 0.0 && female_fraction <= 1.0)) throw ParameterError("female fraction must be in [0, 1]");
  if (lambda_log_sd < 0.0 || sigma_log_sd < 0.0) throw ParameterError("spread must be non-negative");
}

RawRecording generate_recording(const SwayParams& p, double insole_width) {
  p.validate();
  const double dt = 1.0 / kSimSampleRate;
  const auto n = static_cast<std::size_t>(std::llround(p.duration * kSimSampleRate));
  const double decay = std::exp(-p.lambda * dt);
  const double step_sd = std::sqrt((1.0 - std::exp(-2.0 * p.lambda * dt)) / (2.0 * p.lambda));
  const double stationary_sd = 1.0 / std::sqrt(2.0 * p.lambda);
  const double s_ml = p.sigma;
  const double s_ap = p.sigma * p.anisotropy;
  const double a = std::sqrt(p.shared), b = std::sqrt(1.0 - p.shared);

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> N;
  const double floor = 1e-3 * p.baseline_force;
  const double fl0 = p.baseline_force * (1.0 + p.asymmetry);
  const double fr0 = p.baseline_force * (1.0 - p.asymmetry);

  RawRecording rec;
  rec.sample_rate = kSimSampleRate;
  rec.insole_width = insole_width;
  rec.frames.resize(n);
  // Unit-variance OU states, scaled per axis on output.
  double lx = 0, ly = 0, rx = 0, ry = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t == 0) {
      const double cx = N(rng), cy = N(rng);
      lx = stationary_sd * (a * cx + b * N(rng));
      rx = stationary_sd * (a * cx + b * N(rng));
      ly = stationary_sd * (a * cy + b * N(rng));
      ry = stationary_sd * (a * cy + b * N(rng));
    } else {
      const double cx = N(rng), cy = N(rng);
      lx = lx * decay + step_sd * (a * cx + b * N(rng));
      rx = rx * decay + step_sd * (a * cx + b * N(rng));
      ly = ly * decay + step_sd * (a * cy + b * N(rng));
      ry = ry * decay + step_sd * (a * cy + b * N(rng));
    }
    auto& f = rec.frames[t];
    f.l_ml = s_ml * lx;
    f.r_ml = s_ml * rx;
    f.l_ap = s_ap * ly;
    f.r_ap = s_ap * ry;
    f.l_force = std::max(floor, fl0 * (1.0 + p.force_noise * N(rng)));
    f.r_force = std::max(floor, fr0 * (1.0 + p.force_noise * N(rng)));
  }
  return rec;
}

std::vector<SimSubject> draw_subjects(const CohortSpec& spec) {
  if (spec.profiles.empty()) throw ParameterError("cohort needs at least one group profile");
  std::vector<SimSubject> out;
  std::size_t index = 0;
  for (std::size_t g = 0; g < spec.profiles.size(); ++g) {
    const auto& prof = spec.profiles[g];
    prof.validate();
    for (std::size_t i = 0; i < prof.n_subjects; ++i, ++index) {
      std::mt19937_64 rng(derive_seed(spec.seed, {index, 0}));
      std::normal_distribution<double> N;
      std::uniform_real_distribution<double> U;
      SimSubject s;
      char id[32];
      std::snprintf(id, sizeof id, "S%03zu", index + 1);
      s.meta.id = id;
      s.meta.group = prof.group;
      s.meta.sex = U(rng) < prof.female_fraction ? Sex::F : Sex::M;
      auto draw = [&](const NormalDraw& d, double lo, double hi) { return std::clamp(d.mean + d.sd * N(rng), lo, hi); };
      s.meta.age = draw(prof.age, 40.0, 100.0);
      s.meta.education = draw(prof.education, 0.0, 25.0);
      s.meta.height = draw(prof.height, 130.0, 200.0);
      s.meta.weight = draw(prof.weight, 30.0, 150.0);
      for (const auto& [test, d] : prof.neuropsych) {
        s.meta.neuropsych[test] = std::max(0.0, d.mean + d.sd * N(rng));
      }
      s.sway = prof.sway;
      s.sway.lambda = prof.sway.lambda * std::exp(prof.lambda_log_sd * N(rng));
      s.sway.sigma = prof.sway.sigma * std::exp(prof.sigma_log_sd * N(rng));
      s.sway.seed = derive_seed(spec.seed, {index, 1});
      out.push_back(std::move(s));
    }
  }
  return out;
}

Cohort generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir) {
  const auto subjects = draw_subjects(spec);
  std::filesystem::create_directories(out_dir / "recordings");
  Cohort cohort;
  cohort.recordings.resize(subjects.size());
  std::vector<std::exception_ptr> errors(subjects.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < subjects.size();) {
      try {
        auto rec = generate_recording(subjects[i].sway, spec.insole_width);
        rec.subject = subjects[i].meta;
        write_recording(rec, out_dir / "recordings" / (rec.subject.id + ".csv"));
        cohort.recordings[i] = std::move(rec);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, spec.threads));
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

  Manifest manifest;
  manifest.provenance = "simgen seed=" + std::to_string(spec.seed);
  for (const auto& s : subjects) {
    manifest.entries.push_back({s.meta, std::filesystem::path("recordings") / (s.meta.id + ".csv")});
  }
  write_manifest(manifest, out_dir / "manifest.json");
  cohort.provenance = manifest.provenance;
  return cohort;
}

CohortSpec sway_preset(std::string_view name, std::size_t n, std::uint64_t seed) {
  GroupProfile base;
  base.neuropsych = {{Neuropsych::MMSE, {27.0, 2.0}},  {Neuropsych::CDT, {8.5, 1.5}},
                     {Neuropsych::LM_IA, {12.0, 4.0}}, {Neuropsych::LM_IIA, {9.0, 4.0}},
                     {Neuropsych::TMT_A, {45.0, 15.0}}, {Neuropsych::TMT_B, {110.0, 40.0}}};
  base.n_subjects = n;
  CohortSpec spec;
  spec.seed = seed;
  auto with_group = [&](Group g) {
    GroupProfile p = base;
    p.group = g;
    return p;
  };
  if (name == "separable") {
    auto lb = with_group(Group::MCI_LB);
    lb.sway.sigma *= 1.5;
    lb.sway.lambda *= 2.25;
    spec.profiles = {with_group(Group::CN), lb};
  } else if (name == "null") {
    spec.profiles = {with_group(Group::CN), with_group(Group::MCI_LB)};
  } else if (name == "null3") {
    spec.profiles = {with_group(Group::MCI_LB), with_group(Group::MCI_AD), with_group(Group::CN)};
  } else {
    throw ParameterError("unknown simulation preset '" + std::string(name) + "' (available: separable, null, null3)");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

nlohmann::json sway_to_json(const SwayParams& p) {
  return {{"lambda", p.lambda},
          {"sigma", p.sigma},
          {"anisotropy", p.anisotropy},
          {"shared", p.shared},
          {"baseline_force", p.baseline_force},
          {"force_noise", p.force_noise},
          {"asymmetry", p.asymmetry},
          {"duration", p.duration}};
}

SwayParams sway_from_json(const nlohmann::json& j) {
  SwayParams p;
  p.lambda = j.value("lambda", p.lambda);
  p.sigma = j.value("sigma", p.sigma);
  p.anisotropy = j.value("anisotropy", p.anisotropy);
  p.shared = j.value("shared", p.shared);
  p.baseline_force = j.value("baseline_force", p.baseline_force);
  p.force_noise = j.value("force_noise", p.force_noise);
  p.asymmetry = j.value("asymmetry", p.asymmetry);
  p.duration = j.value("duration", p.duration);
  return p;
}

nlohmann::json draw_to_json(const NormalDraw& d) { return {d.mean, d.sd}; }

NormalDraw draw_from_json(const nlohmann::json& j, NormalDraw fallback) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [mean, sd]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

nlohmann::json CohortSpec::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["insole_width"] = insole_width;
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : profiles) {
    nlohmann::json pj;
    pj["group"] = std::string(to_string(p.group));
    pj["n_subjects"] = p.n_subjects;
    pj["sway"] = sway_to_json(p.sway);
    pj["lambda_log_sd"] = p.lambda_log_sd;
    pj["sigma_log_sd"] = p.sigma_log_sd;
    pj["age"] = draw_to_json(p.age);
    pj["education"] = draw_to_json(p.education);
    pj["height"] = draw_to_json(p.height);
    pj["weight"] = draw_to_json(p.weight);
    pj["female_fraction"] = p.female_fraction;
    nlohmann::json np = nlohmann::json::object();
    for (const auto& [t, d] : p.neuropsych) np[std::string(to_string(t))] = draw_to_json(d);
    pj["neuropsych"] = np;
    ps.push_back(std::move(pj));
  }
  j["profiles"] = std::move(ps);
  return j;
}

CohortSpec CohortSpec::from_json(const nlohmann::json& j) {
  try {
    CohortSpec s;
    s.seed = j.value("seed", s.seed);
    s.insole_width = j.value("insole_width", s.insole_width);
    for (const auto& pj : j.at("profiles")) {
      GroupProfile p;
      p.group = parse_group(pj.at("group").get<std::string>());
      p.n_subjects = pj.value("n_subjects", p.n_subjects);
      if (pj.contains("sway")) p.sway = sway_from_json(pj["sway"]);
      p.lambda_log_sd = pj.value("lambda_log_sd", p.lambda_log_sd);
      p.sigma_log_sd = pj.value("sigma_log_sd", p.sigma_log_sd);
      p.age = draw_from_json(pj.value("age", nlohmann::json()), p.age);
      p.education = draw_from_json(pj.value("education", nlohmann::json()), p.education);
      p.height = draw_from_json(pj.value("height", nlohmann::json()), p.height);
      p.weight = draw_from_json(pj.value("weight", nlohmann::json()), p.weight);
      p.female_fraction = pj.value("female_fraction", p.female_fraction);
      if (pj.contains("neuropsych")) {
        for (const auto& [name, d] : pj["neuropsych"].items()) {
          p.neuropsych[parse_neuropsych(name)] = draw_from_json(d, {});
        }
      }
      p.validate();
      s.profiles.push_back(std::move(p));
    }
    if (s.profiles.empty()) throw ParameterError("cohort profile lists no groups");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed simulation profile: ") + e.what());
  }
}

}  // namespace balance
