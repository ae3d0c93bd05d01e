#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scmarket/model.hpp"

namespace scmarket {

enum class SolveMethod { closed_form, tatonnement, interior_point };

const char* method_name(SolveMethod m);

/// Raised when an SC subproblem cannot be solved (e.g. no enabled channels).
struct unsolvable_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the linear coefficient of rho cancels exactly, so the balance
/// equation no longer pins a price.
struct degenerate_scenario_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  /// Residual tolerance. Defaults to 1e-9 for the closed form and 1e-6 for
  /// the iterative methods when unset.
  std::optional<double> tolerance;
  long max_iterations = 1'000'000;
  /// The k_v / k_rho gradient scaling; realized per component as
  /// step_scale / tau so the iteration follows the market's own time
  /// constants.
  double step_scale = 0.01;
  /// Clamp best responses into [vm_min, vm_max]. Off by default: the
  /// optimization problem carries only the balance constraint, so
  /// out-of-bound quantities and negative prices are warnings, not errors.
  bool enforce_bounds = false;

  double effective_tolerance(SolveMethod m) const {
    if (tolerance) return *tolerance;
    return m == SolveMethod::closed_form ? 1e-9 : 1e-6;
  }
};

struct EquilibriumResult {
  MarketState state;
  SolveMethod method = SolveMethod::closed_form;
  long iterations = 0;
  double kkt_residual = 0.0;  // max-norm over stationarity and balance equations
  bool converged = false;     // implies kkt_residual <= the configured tolerance
  bool diverged = false;
  std::vector<std::string> warnings;
};

/// Max-norm KKT residual over all stationarity equations |marginal - rho|
/// and all per-SC balance equations |effective demand - supply|.
double kkt_residual(const MarketState& state, const MarketScenario& scenario);

/// Solves the per-SC stationarity + balance system exactly: each quantity is
/// the best response (rho - alpha) / beta and the balance equation becomes
/// one linear scalar equation in rho per SC. Bounds are not enforced unless
/// options.enforce_bounds is set; violations produce warnings.
EquilibriumResult solve_kkt_closed_form(const MarketScenario& scenario,
                                        const SolverOptions& options = {});

/// Trial-and-error price adjustment: quantities jump to best responses at the
/// current price, then each price moves against its excess effective demand
/// (the direction that contracts for these downward-sloping supply curves).
/// Converged when every balance residual is within tolerance, i.e. when the
/// largest price update falls below step_scale * tolerance.
EquilibriumResult tatonnement(const MarketScenario& scenario,
                              const SolverOptions& options = {});

/// Simultaneous gradient iteration on the Lagrangian: quantities descend
/// their stationarity gradients and prices ascend excess effective demand,
/// each scaled by step_scale / tau. Starts from the all-zero state.
EquilibriumResult interior_point_iterate(const MarketScenario& scenario,
                                         const SolverOptions& options = {});

/// Per-type demand splits recovered by equalizing marginal utilities at rho,
/// for customers that carry per-type coefficients. Order: e, c, s; types
/// without coefficients get no entry.
std::vector<std::pair<char, double>> recover_type_splits(const CustomerParams& customer,
                                                         double rho);

}  // namespace scmarket
