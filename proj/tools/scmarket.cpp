// Command-line surface: solve / simulate / stability-map / welfare / validate.
// Exit codes: 0 success, 1 input error, 2 non-convergence or divergence.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "scmarket/equilibrium.hpp"
#include "scmarket/dynamics.hpp"
#include "scmarket/model.hpp"
#include "scmarket/scenario_io.hpp"
#include "scmarket/stability.hpp"
#include "scmarket/welfare.hpp"

namespace fs = std::filesystem;
using namespace scmarket;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNotConverged = 2;

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::vector<std::string> capture_argv(int argc, char** argv) {
  return std::vector<std::string>(argv, argv + argc);
}

struct CommonArgs {
  std::string scenario_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("scenario", args.scenario_path, "scenario JSON file")->required();
  cmd->add_option("--out", args.out_dir, "output directory (default: current)");
  cmd->add_option("--seed", args.seed, "random seed for perturbations and searches");
  cmd->add_option("--jobs", args.jobs, "worker threads for grid evaluation");
}

RunManifest base_manifest(const CommonArgs& args, const std::vector<std::string>& argv) {
  RunManifest m;
  m.scenario_path = args.scenario_path;
  m.command = argv;
  m.seed = args.seed;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"small-cloud market equilibrium, dynamics and stability toolkit"};
  app.require_subcommand(1);
  const auto argv_copy = capture_argv(argc, argv);

  CommonArgs solve_args, sim_args, map_args, welfare_args, validate_args;

  auto* solve_cmd = app.add_subcommand("solve", "compute the static market equilibrium");
  std::string method = "closed-form";
  SolverOptions solver_options;
  double solve_tolerance = -1.0;
  add_common(solve_cmd, solve_args);
  solve_cmd->add_option("--method", method, "closed-form | tatonnement | interior-point")
      ->check(CLI::IsMember({"closed-form", "tatonnement", "interior-point"}));
  solve_cmd->add_option("--tolerance", solve_tolerance, "residual tolerance");
  solve_cmd->add_option("--max-iterations", solver_options.max_iterations, "iteration cap");
  solve_cmd->add_option("--step-scale", solver_options.step_scale, "gradient step scaling");
  solve_cmd->add_flag("--enforce-bounds", solver_options.enforce_bounds,
                      "clamp best responses into [vm_min, vm_max]");

  auto* sim_cmd = app.add_subcommand("simulate", "integrate the gradient-play dynamics");
  double t_end = 200.0, dt = 1e-3, perturb = 0.0;
  std::string sim_method = "rk4";
  std::size_t record_every = 100;
  bool capacity = false;
  add_common(sim_cmd, sim_args);
  sim_cmd->add_option("--t-end", t_end, "integration horizon in seconds");
  sim_cmd->add_option("--dt", dt, "fixed integration step");
  sim_cmd->add_option("--method", sim_method, "euler | rk4")
      ->check(CLI::IsMember({"euler", "rk4"}));
  sim_cmd->add_option("--perturb", perturb,
                      "relative perturbation applied to the equilibrium initial state");
  sim_cmd->add_option("--record-every", record_every, "record every N-th step");
  sim_cmd->add_flag("--capacity", capacity, "enable capacity-constraint multiplier dynamics");

  auto* map_cmd = app.add_subcommand("stability-map", "Hurwitz sign map over a tau/kappa grid");
  double tr_min = 0.05, tr_max = 5.0, ta_min = 0.05, ta_max = 0.2;
  std::size_t tr_steps = 25, ta_steps = 16;
  std::vector<double> kappas = {0.0, 0.02, 0.05};
  add_common(map_cmd, map_args);
  map_cmd->add_option("--tau-rho-min", tr_min, "grid lower bound for tau_rho (> 0)");
  map_cmd->add_option("--tau-rho-max", tr_max, "grid upper bound for tau_rho");
  map_cmd->add_option("--tau-rho-steps", tr_steps, "tau_rho grid points");
  map_cmd->add_option("--tau-ag-min", ta_min, "grid lower bound for tau_ag");
  map_cmd->add_option("--tau-ag-max", ta_max, "grid upper bound for tau_ag");
  map_cmd->add_option("--tau-ag-steps", ta_steps, "tau_ag grid points");
  map_cmd->add_option("--kappas", kappas, "kappa values, applied as kappa1 = kappa2");

  auto* welfare_cmd = app.add_subcommand("welfare", "compare regulator welfare objectives");
  WelfareOptions welfare_options;
  add_common(welfare_cmd, welfare_args);
  welfare_cmd->add_option("--tolerance", welfare_options.tolerance, "solver tolerance");
  welfare_cmd->add_option("--min-step", welfare_options.min_step, "terminal search step");

  auto* validate_cmd = app.add_subcommand("validate", "check a scenario file");
  add_common(validate_cmd, validate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitInputError : kExitOk;
  }

  try {
    if (solve_cmd->parsed()) {
      const auto scenario = load_scenario(solve_args.scenario_path);
      if (solve_tolerance > 0) solver_options.tolerance = solve_tolerance;
      EquilibriumResult result;
      if (method == "closed-form")
        result = solve_kkt_closed_form(scenario, solver_options);
      else if (method == "tatonnement")
        result = tatonnement(scenario, solver_options);
      else
        result = interior_point_iterate(scenario, solver_options);

      const fs::path out = fs::path(solve_args.out_dir) / "equilibrium.csv";
      write_file(out, equilibrium_csv(result, scenario));
      auto manifest = base_manifest(solve_args, argv_copy);
      manifest.outputs = {out.string()};
      write_manifest(manifest, fs::path(solve_args.out_dir) / "manifest.json");
      if (result.diverged || !result.converged) {
        std::cerr << "solve: method " << method << " did not converge (residual "
                  << result.kkt_residual << ")\n";
        return kExitNotConverged;
      }
      return kExitOk;
    }

    if (sim_cmd->parsed()) {
      const auto scenario = load_scenario(sim_args.scenario_path);
      const auto eq = solve_kkt_closed_form(scenario);
      auto initial = make_dynamic_state(scenario, eq.state, capacity);
      initial = perturb_state(initial, perturb, sim_args.seed);
      const auto meth =
          sim_method == "euler" ? IntegrationMethod::euler : IntegrationMethod::rk4;
      const auto traj = integrate(scenario, initial, t_end, dt, meth, {}, record_every);

      const fs::path out = fs::path(sim_args.out_dir) / "trajectory.csv";
      write_file(out, trajectory_csv(traj));
      auto manifest = base_manifest(sim_args, argv_copy);
      manifest.outputs = {out.string()};
      manifest.notes["terminal_status"] = status_name(traj.terminal_status);
      write_manifest(manifest, fs::path(sim_args.out_dir) / "manifest.json");
      std::cerr << "simulate: terminal status " << status_name(traj.terminal_status) << "\n";
      return traj.terminal_status == TerminalStatus::diverged ? kExitNotConverged : kExitOk;
    }

    if (map_cmd->parsed()) {
      const auto scenario = load_scenario(map_args.scenario_path);
      SweepGrid grid;
      grid.tau_rho_values = linspace(tr_min, tr_max, tr_steps);
      grid.tau_ag_values = linspace(ta_min, ta_max, ta_steps);
      for (double k : kappas) grid.kappa_values.emplace_back(k, k);
      validate_grid(grid);
      const auto cells = run_stability_map(scenario, grid, map_args.jobs);

      const fs::path out = fs::path(map_args.out_dir) / "stability_map.csv";
      write_file(out, stability_map_csv(cells));
      auto manifest = base_manifest(map_args, argv_copy);
      manifest.grid = grid;
      manifest.outputs = {out.string()};
      write_manifest(manifest, fs::path(map_args.out_dir) / "manifest.json");
      return kExitOk;
    }

    if (welfare_cmd->parsed()) {
      const auto scenario = load_scenario(welfare_args.scenario_path);
      welfare_options.seed = static_cast<unsigned>(welfare_args.seed);
      const auto report = compare(scenario, welfare_options);

      const fs::path out = fs::path(welfare_args.out_dir) / "welfare.csv";
      write_file(out, welfare_csv(report, scenario));
      auto manifest = base_manifest(welfare_args, argv_copy);
      manifest.outputs = {out.string()};
      write_manifest(manifest, fs::path(welfare_args.out_dir) / "manifest.json");
      return kExitOk;
    }

    if (validate_cmd->parsed()) {
      const auto scenario = load_scenario(validate_args.scenario_path);
      std::cout << "OK: " << scenario.scs.size() << " SCs, " << scenario.customers.size()
                << " customers\n";
      auto manifest = base_manifest(validate_args, argv_copy);
      manifest.notes["result"] = "valid";
      write_manifest(manifest, fs::path(validate_args.out_dir) / "manifest.json");
      return kExitOk;
    }
  } catch (const parse_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const infeasible_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
  return kExitOk;
}
