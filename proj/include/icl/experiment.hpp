#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icl/estimator.hpp"
#include "icl/optimizer.hpp"

namespace icl {

// ================================================================
// Experiment harness: named presets and user JSON configs resolve to
// ExperimentSpec runs that write CSV data, a metadata JSON and an
// optional SVG plot.
// ================================================================

struct PredictorSpec {
  enum class Kind { SingleIdentityOverV, SingleExplicit, TwoHead, Fit };
  Kind kind = Kind::SingleIdentityOverV;
  double v = 3.0;
  double c = 1.0;  // TwoHead
  MatrixXd A;      // SingleExplicit
  VectorXd b;
  VectorXd u;
  // Fit
  double lr = 0.05;
  int steps = 2000;
  int batch = 256;
};

struct ExperimentSpec {
  std::string name;
  ScenarioConfig config = ScenarioConfig::base(1, 1);
  PredictorSpec predictor;
  SweepAxis axis = SweepAxis::V;
  std::vector<double> values;
  long n_reps = 200000;
  std::uint64_t master_seed = 20240607;
  std::string out_dir = ".";
  std::optional<double> z_threshold;  // gate: exit 2 when a valid row exceeds it
  bool whiten = false;
  bool write_svg = true;
  // special modes that a plain axis sweep cannot express
  enum class Mode { Sweep, Fit, CorrelatedEquivalence, CurvatureGrid };
  Mode mode = Mode::Sweep;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& j);

Predictor build_predictor(const PredictorSpec& ps, const ScenarioConfig& cfg,
                          double axis_value, SweepAxis axis);

// The closed-form evaluator matching (scenario, predictor) for a sweep,
// or an invalid TheoryValue when no formula applies.
TheoryValue matching_theory(const ExperimentSpec& spec,
                            const ScenarioConfig& cfg, double axis_value);

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 1 config error, 2 z-gate failure
  std::vector<std::string> csv_files;
  std::string meta_file;
  std::string message;
};

RunOutcome run(const ExperimentSpec& spec, int workers = 0);

// ----------------------------------------------------------------
// Presets
// ----------------------------------------------------------------

struct PresetOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> reps;
  std::optional<std::string> out_dir;
  std::optional<double> v;
  std::optional<double> sigma_x2;
  std::optional<long> D;
  std::optional<bool> write_svg;
};

struct Preset {
  std::string name;
  std::string description;
  std::string runtime_hint;
};

std::vector<Preset> list_presets(const std::string& filter = "");
bool has_preset(const std::string& name);
std::vector<ExperimentSpec> build_preset(const std::string& name,
                                         const PresetOverrides& ov);

// ----------------------------------------------------------------
// Report writers (CSV schema is fixed:
//   axis,value,mc_mean,mc_stderr,theory,theory_valid,z)
// ----------------------------------------------------------------

std::string format_g17(double x);
void write_rows_csv(const std::string& path, const std::string& axis_name,
                    const std::vector<SweepRow>& rows);
void write_svg_plot(const std::string& path, const std::string& axis_name,
                    const std::vector<SweepRow>& rows, bool log_x, bool log_y);

}  // namespace icl
