#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "icl/experiment.hpp"

namespace {

int run_specs(const std::vector<icl::ExperimentSpec>& specs, int workers) {
  int worst = 0;
  for (const auto& spec : specs) {
    const icl::RunOutcome out = icl::run(spec, workers);
    if (out.exit_code == 1) {
      std::cerr << "error: " << spec.name << ": " << out.message << '\n';
      return 1;
    }
    for (const auto& f : out.csv_files) std::cout << "wrote " << f << '\n';
    if (!out.meta_file.empty()) std::cout << "wrote " << out.meta_file << '\n';
    if (out.exit_code == 2)
      std::cerr << spec.name << ": a gated row missed its threshold\n";
    worst = std::max(worst, out.exit_code);
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Softmax-attention in-context regression laboratory"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run_cmd = app.add_subcommand(
      "run", "Run a preset or a JSON experiment config");
  std::string preset_name;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long> reps;
  int workers = 0;
  std::string out_dir;
  std::optional<double> v_override;
  std::optional<double> sigma_x2;
  std::optional<long> D_override;
  bool no_svg = false;

  run_cmd->add_option("preset", preset_name, "Preset name (see `list`)");
  run_cmd->add_option("--config", config_path, "JSON experiment file");
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--reps", reps, "Monte-Carlo repetitions per row");
  run_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--v", v_override, "Read-out scale v (presets)");
  run_cmd->add_option("--sigma-x2", sigma_x2,
                      "Neighbor variance sigma_x^2 (presets)");
  run_cmd->add_option("--D", D_override, "Number of in-context examples");
  run_cmd->add_flag("--no-svg", no_svg, "Skip SVG plots");

  // ---- list ----
  auto* list_cmd = app.add_subcommand("list", "List presets");
  std::string filter;
  list_cmd->add_option("filter", filter, "Substring filter");

  CLI11_PARSE(app, argc, argv);

  if (list_cmd->parsed()) {
    std::printf("%-18s %-9s %s\n", "preset", "runtime", "description");
    for (const auto& p : icl::list_presets(filter))
      std::printf("%-18s %-9s %s\n", p.name.c_str(), p.runtime_hint.c_str(),
                  p.description.c_str());
    return 0;
  }

  // run
  if (preset_name.empty() == config_path.empty()) {
    std::cerr << "error: give exactly one of <preset> or --config\n";
    return 1;
  }

  try {
    std::vector<icl::ExperimentSpec> specs;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "error: cannot read " << config_path << '\n';
        return 1;
      }
      nlohmann::json j;
      in >> j;
      icl::ExperimentSpec spec = icl::spec_from_json(j);
      if (seed) spec.master_seed = *seed;
      if (reps) spec.n_reps = *reps;
      if (!out_dir.empty()) spec.out_dir = out_dir;
      if (no_svg) spec.write_svg = false;
      specs.push_back(std::move(spec));
    } else {
      if (!icl::has_preset(preset_name)) {
        std::cerr << "error: unknown preset '" << preset_name << "'\n";
        return 1;
      }
      icl::PresetOverrides ov;
      ov.seed = seed;
      ov.reps = reps;
      if (!out_dir.empty()) ov.out_dir = out_dir;
      ov.v = v_override;
      ov.sigma_x2 = sigma_x2;
      ov.D = D_override;
      if (no_svg) ov.write_svg = false;
      specs = icl::build_preset(preset_name, ov);
    }
    return run_specs(specs, workers);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
