#pragma once

#include <utility>
#include <vector>

#include "scmarket/model.hpp"

namespace scmarket {

/// Best response to a common marginal value m, clamped into [lo, hi].
double clamped_best_response(double m, const QuadraticCoefficients& coeffs, double lo, double hi);

/// Clamped excess effective demand of one SC at price rho:
/// sum_j f_j * clamp(BR_j(rho)) - sum_x clamp(BR_x(rho)).
double clamped_excess_demand(const MarketScenario& scenario, std::size_t sc, double rho);

/// All prices at which the SC's clamped excess effective demand is zero.
/// The excess is piecewise linear; candidates are the exact zeros of each
/// piece plus endpoints of identically-zero stretches.
std::vector<double> clamped_clearing_prices(const MarketScenario& scenario, std::size_t sc);

/// Equal-marginal split of a supply total across an SC's enabled channels,
/// clamped to channel bounds.
struct SupplySplit {
  std::vector<double> vm;  // one entry per enabled channel, in channel order
  double marginal = 0.0;   // common marginal cost of the unclamped channels
  double cost = 0.0;       // total cost of the split
};

/// Feasible range of total supply, [sum of vm_min, sum of vm_max].
std::pair<double, double> supply_range(const SmallCloudParams& sc);

/// Splits total supply among enabled channels so marginal costs equalize
/// where bounds permit. Throws std::domain_error when total is outside the
/// feasible range (beyond a small rounding slack).
SupplySplit split_supply(const SmallCloudParams& sc, double total);

}  // namespace scmarket
