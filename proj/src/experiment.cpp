#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "icl/experiment.hpp"

namespace icl {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VectorXd vector_from_json(const json& arr) {
  VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& rows) {
  const auto nr = rows.size();
  const auto nc = nr ? rows[0].size() : 0;
  MatrixXd m(nr, nc);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "base") return Scenario::Base;
  if (s == "prior") return Scenario::Prior;
  if (s == "noisy") return Scenario::Noisy;
  if (s == "correlated") return Scenario::Correlated;
  if (s == "local") return Scenario::Local;
  if (s == "local_shifted") return Scenario::LocalShifted;
  throw std::invalid_argument("unknown scenario: " + s);
}

SweepAxis axis_from_string(const std::string& s) {
  if (s == "v") return SweepAxis::V;
  if (s == "c") return SweepAxis::C;
  if (s == "D") return SweepAxis::Examples;
  if (s == "d") return SweepAxis::Dim;
  if (s == "sigma_eps") return SweepAxis::SigmaEps;
  if (s == "sigma_x") return SweepAxis::SigmaX;
  if (s == "prior_scale") return SweepAxis::PriorScale;
  throw std::invalid_argument("unknown axis: " + s);
}

const char* kind_to_string(PredictorSpec::Kind k) {
  switch (k) {
    case PredictorSpec::Kind::SingleIdentityOverV: return "single_identity_over_v";
    case PredictorSpec::Kind::SingleExplicit: return "single_explicit";
    case PredictorSpec::Kind::TwoHead: return "two_head";
    case PredictorSpec::Kind::Fit: return "fit";
  }
  return "?";
}

PredictorSpec::Kind kind_from_string(const std::string& s) {
  if (s == "single_identity_over_v") return PredictorSpec::Kind::SingleIdentityOverV;
  if (s == "single_explicit") return PredictorSpec::Kind::SingleExplicit;
  if (s == "two_head") return PredictorSpec::Kind::TwoHead;
  if (s == "fit") return PredictorSpec::Kind::Fit;
  throw std::invalid_argument("unknown predictor type: " + s);
}

const char* mode_to_string(ExperimentSpec::Mode m) {
  switch (m) {
    case ExperimentSpec::Mode::Sweep: return "sweep";
    case ExperimentSpec::Mode::Fit: return "fit";
    case ExperimentSpec::Mode::CorrelatedEquivalence: return "correlated_equivalence";
    case ExperimentSpec::Mode::CurvatureGrid: return "curvature_grid";
  }
  return "?";
}

ExperimentSpec::Mode mode_from_string(const std::string& s) {
  if (s == "sweep") return ExperimentSpec::Mode::Sweep;
  if (s == "fit") return ExperimentSpec::Mode::Fit;
  if (s == "correlated_equivalence") return ExperimentSpec::Mode::CorrelatedEquivalence;
  if (s == "curvature_grid") return ExperimentSpec::Mode::CurvatureGrid;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string timestamp_utc() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

json to_json(const ExperimentSpec& spec) {
  json cfg{{"d", spec.config.d},
           {"D", spec.config.D},
           {"variant", to_string(spec.config.variant)},
           {"sigma_eps", spec.config.sigma_eps},
           {"sigma_prior", spec.config.sigma_prior},
           {"sigma_x", spec.config.sigma_x},
           {"theta0", vector_to_json(spec.config.theta0)},
           {"sigma_cov", matrix_to_json(spec.config.sigma_cov)}};

  json pred{{"type", kind_to_string(spec.predictor.kind)},
            {"v", spec.predictor.v}};
  switch (spec.predictor.kind) {
    case PredictorSpec::Kind::TwoHead:
      pred["c"] = spec.predictor.c;
      break;
    case PredictorSpec::Kind::SingleExplicit:
      pred["A"] = matrix_to_json(spec.predictor.A);
      pred["b"] = vector_to_json(spec.predictor.b);
      if (spec.predictor.u.size()) pred["u"] = vector_to_json(spec.predictor.u);
      break;
    case PredictorSpec::Kind::Fit:
      pred["lr"] = spec.predictor.lr;
      pred["steps"] = spec.predictor.steps;
      pred["batch"] = spec.predictor.batch;
      break;
    default:
      break;
  }

  json j{{"name", spec.name},
         {"config", std::move(cfg)},
         {"predictor", std::move(pred)},
         {"axis", to_string(spec.axis)},
         {"values", spec.values},
         {"n_reps", spec.n_reps},
         {"master_seed", spec.master_seed},
         {"out_dir", spec.out_dir},
         {"whiten", spec.whiten},
         {"write_svg", spec.write_svg},
         {"mode", mode_to_string(spec.mode)}};
  if (spec.z_threshold)
    j["z_threshold"] = *spec.z_threshold;
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  ExperimentSpec spec;
  spec.name = j.at("name").get<std::string>();

  const json& c = j.at("config");
  const int d = c.at("d").get<int>();
  VectorXd theta0 = c.contains("theta0") ? vector_from_json(c["theta0"])
                                         : VectorXd::Zero(d);
  MatrixXd cov = c.contains("sigma_cov") ? matrix_from_json(c["sigma_cov"])
                                         : MatrixXd::Identity(d, d);
  spec.config = ScenarioConfig::make(
      d, c.at("D").get<int>(), scenario_from_string(c.at("variant")),
      c.value("sigma_eps", 0.0), std::move(theta0), c.value("sigma_prior", 1.0),
      std::move(cov), c.value("sigma_x", 0.0));

  const json& p = j.at("predictor");
  spec.predictor.kind = kind_from_string(p.at("type"));
  spec.predictor.v = p.value("v", 3.0);
  spec.predictor.c = p.value("c", 1.0);
  if (p.contains("A")) spec.predictor.A = matrix_from_json(p["A"]);
  if (p.contains("b")) spec.predictor.b = vector_from_json(p["b"]);
  if (p.contains("u")) spec.predictor.u = vector_from_json(p["u"]);
  spec.predictor.lr = p.value("lr", 0.05);
  spec.predictor.steps = p.value("steps", 2000);
  spec.predictor.batch = p.value("batch", 256);

  spec.axis = axis_from_string(j.at("axis"));
  spec.values = j.at("values").get<std::vector<double>>();
  spec.n_reps = j.value("n_reps", 200000L);
  spec.master_seed = j.value("master_seed", std::uint64_t{20240607});
  spec.out_dir = j.value("out_dir", std::string("."));
  if (j.contains("z_threshold") && !j["z_threshold"].is_null())
    spec.z_threshold = j["z_threshold"].get<double>();
  spec.whiten = j.value("whiten", false);
  spec.write_svg = j.value("write_svg", true);
  spec.mode = mode_from_string(j.value("mode", std::string("sweep")));
  return spec;
}

Predictor build_predictor(const PredictorSpec& ps, const ScenarioConfig& cfg,
                          double axis_value, SweepAxis axis) {
  const double v = axis == SweepAxis::V ? axis_value : ps.v;
  switch (ps.kind) {
    case PredictorSpec::Kind::SingleIdentityOverV:
      return SingleHeadParams::identity_over_v(cfg.d, v);
    case PredictorSpec::Kind::SingleExplicit: {
      SingleHeadParams p;
      p.A = ps.A.size() ? ps.A : MatrixXd::Zero(cfg.d, cfg.d);
      p.b = ps.b.size() ? ps.b : VectorXd::Zero(cfg.d);
      p.v = v;
      p.u = ps.u;
      return p;
    }
    case PredictorSpec::Kind::TwoHead: {
      const double c = axis == SweepAxis::C ? axis_value : ps.c;
      return two_head_from_c(c, v, cfg.d);
    }
    case PredictorSpec::Kind::Fit:
      throw std::invalid_argument("fit predictor has no sweep form");
  }
  throw std::logic_error("build_predictor: bad kind");
}

TheoryValue matching_theory(const ExperimentSpec& spec,
                            const ScenarioConfig& cfg, double axis_value) {
  const auto& ps = spec.predictor;
  const double v = spec.axis == SweepAxis::V ? axis_value : ps.v;
  const double c = spec.axis == SweepAxis::C ? axis_value : ps.c;
  const bool canonical_single =
      ps.kind == PredictorSpec::Kind::SingleIdentityOverV;
  const bool two_head = ps.kind == PredictorSpec::Kind::TwoHead;

  switch (cfg.variant) {
    case Scenario::Base:
      if (canonical_single) return loss_single(cfg.d, cfg.D, v);
      if (two_head) return loss_multi(cfg.d, cfg.D, v, c);
      break;
    case Scenario::Noisy:
      if (canonical_single)
        return loss_single_noisy(cfg.d, cfg.D, v, cfg.sigma_eps);
      if (two_head)
        return loss_multi_noisy(cfg.d, cfg.D, v, c, cfg.sigma_eps);
      break;
    case Scenario::Prior:
      if (canonical_single || two_head)
        return loss_prior(cfg.d, cfg.D, v, cfg.theta0, cfg.sigma_prior, c,
                          two_head);
      break;
    case Scenario::LocalShifted:
      if (canonical_single) {
        const double sx =
            spec.axis == SweepAxis::SigmaX ? axis_value : cfg.sigma_x;
        TheoryValue t;
        t.value = shifted_local_limit(v, sx);
        t.valid = true;
        t.condition_margin = std::numeric_limits<double>::infinity();
        return t;
      }
      break;
    case Scenario::Local:
    case Scenario::Correlated:
      break;
  }
  return {};  // no matching closed form
}

namespace {

void warn_near_boundary(const ExperimentSpec& spec,
                        const std::vector<SweepRow>& rows) {
  for (const auto& r : rows) {
    if (!r.theory.valid || !std::isfinite(r.theory.condition_margin)) continue;
    const double v = spec.axis == SweepAxis::V ? r.value : spec.predictor.v;
    if (r.theory.condition_margin < 0.05 * v * v)
      std::cerr << "warning: " << spec.name << " at " << to_string(spec.axis)
                << "=" << r.value
                << " is within 5% of a singular boundary; the closed form "
                   "is unreliable there\n";
  }
}

json row_to_meta(const SweepRow& r) {
  return json{{"value", r.value}, {"status", r.status}};
}

RunOutcome finish(const ExperimentSpec& spec, const std::string& axis_name,
                  const std::vector<SweepRow>& rows, json extra,
                  double wall_seconds, int workers, int exit_code,
                  bool log_x = false, bool log_y = false) {
  namespace fs = std::filesystem;
  RunOutcome out;
  out.exit_code = exit_code;
  fs::create_directories(spec.out_dir);
  const std::string base = (fs::path(spec.out_dir) / spec.name).string();

  const std::string csv = base + ".csv";
  write_rows_csv(csv, axis_name, rows);
  out.csv_files.push_back(csv);

  if (spec.write_svg) {
    write_svg_plot(base + ".svg", axis_name, rows, log_x, log_y);
  }

  json meta{{"name", spec.name},
            {"version", kVersion},
            {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
            {"timestamp", timestamp_utc()},
            {"master_seed", spec.master_seed},
            {"n_reps", spec.n_reps},
            {"workers", workers},
            {"wall_time_seconds", wall_seconds},
            {"error_bars", "1sigma"},
            {"spec", to_json(spec)},
            {"outputs", out.csv_files},
            {"exit_code", exit_code}};
  json row_meta = json::array();
  for (const auto& r : rows) row_meta.push_back(row_to_meta(r));
  meta["rows"] = std::move(row_meta);
  if (!extra.is_null()) meta["notes"] = std::move(extra);

  out.meta_file = base + "_meta.json";
  std::ofstream mf(out.meta_file);
  if (!mf) throw std::runtime_error("cannot open output file: " + out.meta_file);
  mf << meta.dump(2) << '\n';
  return out;
}

RunOutcome run_sweep(const ExperimentSpec& spec, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  McOptions opts;
  opts.workers = workers;
  opts.whiten = spec.whiten;

  PredictorFactory factory = [&](const ScenarioConfig& cfg, double value) {
    return build_predictor(spec.predictor, cfg, value, spec.axis);
  };
  TheoryFn theory = [&](const ScenarioConfig& cfg, double value) {
    return matching_theory(spec, cfg, value);
  };

  const auto rows = sweep(spec.config, factory, spec.axis, spec.values,
                          spec.n_reps, spec.master_seed, theory, opts);
  warn_near_boundary(spec, rows);

  int exit_code = 0;
  if (spec.z_threshold) {
    for (const auto& r : rows)
      if (r.status == "ok" && r.theory.valid && std::isfinite(r.z) &&
          std::abs(r.z) > *spec.z_threshold)
        exit_code = 2;
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  const bool log_x = spec.axis == SweepAxis::Examples;
  return finish(spec, to_string(spec.axis), rows, json(), wall, workers,
                exit_code, log_x, /*log_y=*/true);
}

RunOutcome run_fit(const ExperimentSpec& spec, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  SingleHeadParams init;
  init.A = spec.predictor.A.size() ? spec.predictor.A
                                   : MatrixXd::Zero(spec.config.d, spec.config.d);
  init.b = spec.predictor.b.size() ? spec.predictor.b
                                   : VectorXd::Zero(spec.config.d);
  init.v = spec.predictor.v;
  init.u = spec.predictor.u;

  FitOptions fopts;
  fopts.workers = workers;
  const FitReport report =
      fit_single_head(spec.config, spec.predictor.v, init, spec.predictor.lr,
                      spec.predictor.steps, spec.predictor.batch,
                      spec.master_seed, fopts);

  const TheoryValue target =
      loss_single(spec.config.d, spec.config.D, spec.predictor.v);
  std::vector<SweepRow> rows;
  rows.reserve(report.trajectory.size());
  for (const auto& [step, loss] : report.trajectory) {
    SweepRow r;
    r.value = step;
    r.estimate = {loss, 0.0, spec.predictor.batch, spec.master_seed};
    r.theory = target;
    rows.push_back(std::move(r));
  }

  json extra{{"distance_to_theory", report.distance_to_theory},
             {"diverged", report.diverged},
             {"fitted_A", matrix_to_json(report.params.A)},
             {"fitted_b", vector_to_json(report.params.b)},
             {"v", report.params.v}};

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return finish(spec, "step", rows, std::move(extra), wall, workers,
                report.diverged ? 2 : 0, false, true);
}

// Whitened correlated prompts against isotropic prompts whose coefficient
// is premultiplied by Sigma^{1/2}; the two populations share one loss law.
RunOutcome run_correlated_equivalence(const ExperimentSpec& spec, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioConfig& cfg = spec.config;
  if (cfg.variant != Scenario::Correlated)
    throw std::invalid_argument(
        "correlated_equivalence requires a correlated scenario config");

  const Predictor pred =
      build_predictor(spec.predictor, cfg, spec.predictor.v, spec.axis);
  McOptions opts;
  opts.workers = workers;
  opts.whiten = true;
  const LossEstimate whitened =
      mc_loss(cfg, pred, spec.n_reps, spec.master_seed, opts);

  const SymmetricRoot root = symmetric_root(cfg.sigma_cov);
  const ScenarioConfig iso = ScenarioConfig::base(cfg.d, cfg.D);
  auto per_rep = [&](long k) {
    thread_local Prompt prompt;
    RngStream rng(spec.master_seed, static_cast<std::uint64_t>(k));
    const VectorXd theta = root.root * sample_theta(iso, rng);
    sample_prompt_into(iso, theta, rng, prompt);
    const double err = predict(prompt, pred) - prompt.y_q;
    return err * err;
  };
  const RunningMoments iso_mom =
      detail::run_blocked(spec.n_reps, workers, per_rep);
  const LossEstimate transformed{iso_mom.mean, iso_mom.std_error(),
                                 spec.n_reps, spec.master_seed};

  const double delta = whitened.mean - transformed.mean;
  const double combined = std::hypot(whitened.std_error, transformed.std_error);
  const bool pass = std::abs(delta) <= 3.0 * combined;

  std::vector<SweepRow> rows(2);
  rows[0].value = 0;
  rows[0].estimate = whitened;
  rows[1].value = 1;
  rows[1].estimate = transformed;

  json extra{{"case_labels", {"whitened_correlated", "isotropic_transformed_theta"}},
             {"delta", delta},
             {"combined_stderr", combined},
             {"pass_3_sigma", pass}};

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return finish(spec, "case", rows, std::move(extra), wall, workers,
                pass ? 0 : 2);
}

// Analytic curvature at c = 1 against a central finite difference of the
// two-head loss; rows carry the FD value in the mc_mean column.
RunOutcome run_curvature_grid(const ExperimentSpec& spec, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const double h = 1e-4;
  std::vector<SweepRow> rows;
  bool all_match = true;
  for (const double v : spec.values) {
    SweepRow r;
    r.value = v;
    try {
      const double analytic = curvature_at_c1(spec.config.d, spec.config.D, v);
      const double lp = loss_multi(spec.config.d, spec.config.D, v, 1.0 + h).value;
      const double l0 = loss_multi(spec.config.d, spec.config.D, v, 1.0).value;
      const double lm = loss_multi(spec.config.d, spec.config.D, v, 1.0 - h).value;
      const double fd = (lp - 2.0 * l0 + lm) / (h * h);
      r.estimate = {fd, 0.0, 0, spec.master_seed};
      r.theory = {analytic, true, v * v - 2.0};
      const double rel = std::abs(fd - analytic) / std::abs(analytic);
      if (!(rel < 1e-4) || !(analytic < 0.0)) all_match = false;
    } catch (const std::exception& e) {
      r.status = e.what();
      all_match = false;
    }
    rows.push_back(std::move(r));
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json extra{{"fd_step", h}, {"all_match_1e-4", all_match}};
  return finish(spec, "v", rows, std::move(extra), wall, workers,
                all_match ? 0 : 2);
}

}  // namespace

RunOutcome run(const ExperimentSpec& spec, int workers) {
  try {
    switch (spec.mode) {
      case ExperimentSpec::Mode::Sweep:
        return run_sweep(spec, workers);
      case ExperimentSpec::Mode::Fit:
        return run_fit(spec, workers);
      case ExperimentSpec::Mode::CorrelatedEquivalence:
        return run_correlated_equivalence(spec, workers);
      case ExperimentSpec::Mode::CurvatureGrid:
        return run_curvature_grid(spec, workers);
    }
    throw std::logic_error("run: bad mode");
  } catch (const std::exception& e) {
    RunOutcome out;
    out.exit_code = 1;
    out.message = e.what();
    return out;
  }
}

}  // namespace icl
