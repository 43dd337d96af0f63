#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ringsim/cli/config.hpp"
#include "ringsim/cli/recipes.hpp"
#include "ringsim/cli/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRegime = 3;
constexpr int kExitNumerical = 4;

using namespace ringsim;
using namespace ringsim::cli;

struct RunArgs {
  std::string config_path;
  std::string recipe;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> n_traj;
  unsigned threads = 1;
};

ExperimentConfig resolve(const RunArgs& args) {
  ExperimentConfig c = args.recipe.empty() ? load_config(args.config_path) : find_recipe(args.recipe).config;
  if (args.seed) c.numerics.base_seed = *args.seed;
  if (args.n_traj) c.numerics.n_traj = *args.n_traj;
  if (args.out) c.outputs.directory = *args.out;
  validate(c);
  return c;
}

int run(const RunArgs& args) {
  const auto c = resolve(args);
  RunOptions ro;
  ro.threads = args.threads;
  ro.log = [](const std::string& m) { std::cerr << "ringsim: " << m << '\n'; };
  const auto result = run_experiment(c, c.outputs.directory, ro);
  std::cout << "wrote " << result.files.size() << " files to " << result.directory.string() << '\n';
  for (const auto& name : summary_scalar_names()) {
    const auto& v = result.scalar(name);
    if (!v.is_null()) std::cout << "  " << name << " = " << (v.is_number_float() ? format_double(v.get<double>()) : v.dump()) << '\n';
  }
  return 0;
}

int list_recipes(const std::string& export_dir) {
  for (const auto& r : recipes()) {
    std::cout << r.name << "\n  target: " << r.figure << "\n  " << r.description << "\n  experiment: "
              << to_string(r.config.experiment) << "\n  runtime: " << r.runtime << '\n';
    const auto j = to_json(r.config);
    const auto& params = j.contains("ring") ? j.at("ring") : j.at("oscillator");
    std::cout << "  parameters: " << params.dump() << '\n';
    if (!export_dir.empty()) atomic_write(std::filesystem::path(export_dir) / (r.name + ".json"), dump_json(j));
  }
  return 0;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const RegimeError& e) {
    std::cerr << "physics-regime error: " << e.what() << '\n';
    return kExitRegime;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-trajectory and Gaussian simulations of two particles in a ring cavity"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file or a built-in recipe");
  auto* cfg_opt = run_cmd->add_option("config", run_args.config_path, "config file (JSON)");
  auto* recipe_opt = run_cmd->add_option("--recipe", run_args.recipe, "run a built-in recipe instead of a config file");
  cfg_opt->excludes(recipe_opt);
  run_cmd->add_option("--seed", run_args.seed, "override numerics.base_seed");
  run_cmd->add_option("--out", run_args.out, "override outputs.directory");
  run_cmd->add_option("--n-traj", run_args.n_traj, "override numerics.n_traj");
  run_cmd->add_option("--threads", run_args.threads, "worker threads for trajectories (0: all cores); results do not depend on it");

  std::string export_dir;
  auto* recipes_cmd = app.add_subcommand("recipes", "list built-in recipes");
  recipes_cmd->add_option("--export", export_dir, "also write each recipe as <dir>/<name>.json");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a config file without running it");
  validate_cmd->add_option("config", validate_path, "config file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  if (*run_cmd) {
    if (run_args.config_path.empty() && run_args.recipe.empty()) {
      std::cerr << "config error: run needs a config file or --recipe\n";
      return kExitConfig;
    }
    return guarded([&] { return run(run_args); });
  }
  if (*recipes_cmd) return guarded([&] { return list_recipes(export_dir); });
  return guarded([&] {
    const auto c = load_config(validate_path);
    if (uses_ring(c.experiment)) c.ring.validate();
    else c.oscillator.validate();
    std::cout << validate_path << ": ok (" << to_string(c.experiment) << ")\n";
    return 0;
  });
}
