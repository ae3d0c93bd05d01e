#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scmarket/equilibrium.hpp"
#include "scmarket/dynamics.hpp"
#include "scmarket/model.hpp"
#include "scmarket/welfare.hpp"

namespace scmarket {

inline constexpr const char* kToolVersion = "scmarket 1.0.0";

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a JSON scenario. Each SC row carries one (alpha, beta, tau) set that
/// applies to every enabled channel; a "channels" object restricts the
/// enabled channels and may override fields per channel. Unknown keys are
/// rejected; the result is validated before being returned.
MarketScenario load_scenario(const std::filesystem::path& path);
MarketScenario parse_scenario(const std::string& text, const std::string& origin = "<string>");

std::string serialize_scenario(const MarketScenario& scenario);
void save_scenario(const MarketScenario& scenario, const std::filesystem::path& path);

/// Locale-independent shortest round-trip formatting; the basis of all
/// reproducible CSV output.
std::string format_double(double v);
std::string csv_field(const std::string& raw);  // RFC-4180 style quoting

std::string equilibrium_csv(const EquilibriumResult& result, const MarketScenario& scenario);
std::string trajectory_csv(const TrajectoryRecord& trajectory);
std::string welfare_csv(const WelfareReport& report, const MarketScenario& scenario);

struct StabilityCell {
  double tau_rho = 0, tau_ag = 0, kappa1 = 0, kappa2 = 0;
  double max_real_eig = 0;
  bool is_hurwitz = false;
};
std::string stability_map_csv(const std::vector<StabilityCell>& cells);

struct SweepGrid {
  std::vector<double> tau_rho_values;
  std::vector<double> tau_ag_values;
  std::vector<std::pair<double, double>> kappa_values;

  /// tau_rho 0.05..5 over 25 points, tau_ag 0.05..0.2 over 16 points, kappa
  /// pairs (0,0), (0.02,0.02), (0.05,0.05). The tau_rho sweep starts at 0.05
  /// rather than 0: a zero time constant is a division by zero in the price
  /// dynamics.
  static SweepGrid defaults();
  std::size_t cells() const {
    return tau_rho_values.size() * tau_ag_values.size() * kappa_values.size();
  }
};
std::vector<double> linspace(double lo, double hi, std::size_t n);
void validate_grid(const SweepGrid& grid);

/// Scenario with the cell's tau_rho / tau_ag / kappa applied uniformly across
/// all SCs and customers (supply-channel taus are untouched).
MarketScenario apply_cell(const MarketScenario& scenario, double tau_rho, double tau_ag,
                          double kappa1, double kappa2);

/// Evaluates the stability map over the grid, kappa-major then tau_rho then
/// tau_ag, using up to `jobs` worker threads. Cell values are independent of
/// the thread count.
std::vector<StabilityCell> run_stability_map(const MarketScenario& scenario, const SweepGrid& grid,
                                             unsigned jobs = 1);

struct RunManifest {
  std::string scenario_path;
  std::vector<std::string> command;  // argv, as invoked
  std::optional<SweepGrid> grid;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> notes;  // e.g. simulate's terminal_status
  std::string tool_version = kToolVersion;
};
std::string manifest_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

}  // namespace scmarket
